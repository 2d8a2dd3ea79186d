mod common;

use vqa_harness::datasets::{
    build_quad, load_dataset, write_canonical, write_winoground_jsonl, DatasetFormat, Framing, LoadError,
};
use vqa_harness::metrics::{Grader, YesNo};

fn load(name: &str, format: DatasetFormat) -> vqa_harness::datasets::Dataset {
    load_dataset(&common::fixture(&format!("datasets/{name}")), format).unwrap()
}

#[test]
fn okvqa_fixture() {
    let path = common::fixture("datasets/okvqa_val.json");
    let records = load("okvqa_val.json", DatasetFormat::Okvqa).into_questions(&path).unwrap();
    assert_eq!(records.len(), 3);
    let r = &records[0];
    assert_eq!(r.id, "2971475");
    assert_eq!(r.image_ref, "COCO_val2014_000000297147.jpg");
    assert_eq!(r.split, "val2014");
    assert_eq!(r.refs.len(), 10);
    assert_eq!(r.dataset, "okvqa");
    assert_eq!(records[1].question_type.as_deref(), Some("number"));
    // No answer type: falls back to the question heuristic.
    assert_eq!(records[2].question_type.as_deref(), Some("yes/no"));
    assert!(matches!(r.grader(false), Grader::Vqa { .. }));
    assert_eq!(r.grader(false).score("Racing"), 1.0);
}

#[test]
fn aokvqa_fixture_multiple_choice() {
    let path = common::fixture("datasets/aokvqa_val.json");
    let records = load("aokvqa_val.json", DatasetFormat::Aokvqa).into_questions(&path).unwrap();
    assert_eq!(records.len(), 2);
    let r = &records[0];
    assert_eq!(r.options.as_ref().unwrap().len(), 4);
    assert_eq!(r.correct_answer(), Some("icing"));
    assert!(r.is_multiple_choice());
    assert_eq!(r.split, "val");
    assert_eq!(r.grader(true), Grader::Binary { reference: "icing".into() });
    assert_eq!(r.grader(true).score("Icing."), 1.0);
    assert_eq!(r.grader(false).score("frosting"), 1.0);
}

#[test]
fn gqa_fixture() {
    let path = common::fixture("datasets/gqa_testdev.json");
    let records = load("gqa_testdev.json", DatasetFormat::Gqa).into_questions(&path).unwrap();
    assert_eq!(records.len(), 3);
    let shorts = records.iter().find(|r| r.id == "20968379").unwrap();
    assert_eq!(shorts.image_ref, "n288870.jpg");
    assert_eq!(shorts.question_type.as_deref(), Some("verify"));
    assert_eq!(shorts.refs.raw(), ["yes"]);
    assert_eq!(shorts.split, "gqa_testdev");
}

#[test]
fn visual7w_fixture() {
    let path = common::fixture("datasets/visual7w_telling.json");
    let records = load("visual7w_telling.json", DatasetFormat::Visual7w).into_questions(&path).unwrap();
    assert_eq!(records.len(), 3);
    for r in &records {
        let options = r.options.as_ref().unwrap();
        assert_eq!(options.len(), 4);
        let mut sorted = options.clone();
        sorted.sort();
        assert_eq!(&sorted, options);
    }
    assert_eq!(records[0].correct_answer(), Some("Brown."));
    assert_eq!(records[0].question_type.as_deref(), Some("what"));
}

#[test]
fn winoground_fixture_and_quads() {
    let path = common::fixture("datasets/winoground.jsonl");
    let samples = load("winoground.jsonl", DatasetFormat::Winoground).into_winoground(&path).unwrap();
    assert_eq!(samples.len(), 2);
    assert!(samples[0].questions.is_none());
    let quad = build_quad(&samples[0], Framing::Statement).unwrap();
    assert!(quad.is_balanced());
    assert_eq!(quad.items[0].question, "Does this describe the image? The taller person hugs the shorter person");
    assert_eq!(quad.items[1].expected, YesNo::No);
    assert!(build_quad(&samples[0], Framing::Converted).is_err());
    let converted = build_quad(&samples[1], Framing::Converted).unwrap();
    assert_eq!(converted.items[3].image_ref, "ex_1_img_1.png");
    assert_eq!(converted.items[3].question, "Answer the following yes/no question. Did a car smash into a tree?");

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("wino.jsonl");
    write_winoground_jsonl(&out, &samples).unwrap();
    let again = load_dataset(&out, DatasetFormat::Winoground).unwrap().into_winoground(&out).unwrap();
    assert_eq!(again, samples);
}

#[test]
fn canonical_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for (name, format) in [
        ("okvqa_val.json", DatasetFormat::Okvqa),
        ("aokvqa_val.json", DatasetFormat::Aokvqa),
        ("gqa_testdev.json", DatasetFormat::Gqa),
        ("visual7w_telling.json", DatasetFormat::Visual7w),
    ] {
        let path = common::fixture(&format!("datasets/{name}"));
        let records = load(name, format).into_questions(&path).unwrap();
        let out = dir.path().join(format!("{name}.jsonl"));
        write_canonical(&out, &records).unwrap();
        let again = load_dataset(&out, DatasetFormat::Canonical).unwrap().into_questions(&out).unwrap();
        assert_eq!(again, records, "{name}");
    }
}

#[test]
fn errors_name_the_problem() {
    let path = common::fixture("datasets/aokvqa_missing_question.json");
    match load_dataset(&path, DatasetFormat::Aokvqa) {
        Err(LoadError::Malformed { location, message, .. }) => {
            assert!(location.contains("[0]") && location.ends_with(".question"), "{location}");
            assert_eq!(message, "missing field");
        }
        other => panic!("expected Malformed, got {other:?}"),
    }
    assert!(matches!(
        load_dataset(&common::fixture("datasets/nope.json"), DatasetFormat::Okvqa),
        Err(LoadError::Io { .. })
    ));
    assert!(matches!("vizwiz".parse::<DatasetFormat>(), Err(LoadError::UnknownFormat(_))));

    let dir = tempfile::tempdir().unwrap();
    let dup = dir.path().join("dup.jsonl");
    let mut records = common::synthetic_records(2);
    records[1].id = records[0].id.clone();
    write_canonical(&dup, &records).unwrap();
    assert!(matches!(load_dataset(&dup, DatasetFormat::Canonical), Err(LoadError::DuplicateId { .. })));

    let path = common::fixture("datasets/okvqa_val.json");
    assert!(matches!(
        load_dataset(&path, DatasetFormat::Okvqa).unwrap().into_winoground(&path),
        Err(LoadError::WrongKind { .. })
    ));
}

#[test]
fn empty_input_is_empty() {
    for format in [DatasetFormat::Okvqa, DatasetFormat::Aokvqa, DatasetFormat::Canonical, DatasetFormat::Winoground] {
        let ds = load_dataset(&common::fixture("datasets/empty.json"), format).unwrap();
        assert!(ds.is_empty(), "{format}");
    }
}
