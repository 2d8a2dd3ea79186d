//! Winoground as a yes/no VQA task: statements are either framed directly
//! or converted into questions by a text model.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{read_jsonl, Ctx, LoadError};
use crate::backend::{preset, BackendError, BackendRequest, ModelBackend, Preset, Purpose};
use crate::metrics::{QuadItem, WinogroundQuad, YesNo};

pub const CONVERSION_PROMPT: &str = "Convert this text into a yes/no question for the Visual Question Answering task:";
pub const STATEMENT_PREFIX: &str = "Does this describe the image?";
/// Lead-in used when asking a converted question.
pub const CONVERTED_PREFIX: &str = "Answer the following yes/no question.";

#[derive(Debug, Error)]
pub enum ConversionError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("statement is empty")]
    EmptyStatement,
    #[error("converted text is not a question: {0:?}")]
    ConversionInvalid(String),
    #[error("sample {0} is missing converted questions")]
    QuadIncomplete(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WinogroundSample {
    pub id: String,
    pub images: [String; 2],
    pub captions: [String; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub questions: Option<[String; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Framing {
    #[default]
    Statement,
    Converted,
}

pub fn statement_form(text: &str) -> Result<String, ConversionError> {
    let text = text.trim();
    if text.is_empty() {
        return Err(ConversionError::EmptyStatement);
    }
    Ok(format!("{STATEMENT_PREFIX} {text}"))
}

pub fn conversion_prompt(statement: &str) -> String {
    format!("{CONVERSION_PROMPT} {}", statement.trim())
}

/// One text-only call; the first non-empty line must be a question.
pub fn convert_statement(statement: &str, backend: &dyn ModelBackend) -> Result<String, ConversionError> {
    if statement.trim().is_empty() {
        return Err(ConversionError::EmptyStatement);
    }
    let req = BackendRequest::text(conversion_prompt(statement), preset(Preset::Convert), Purpose::Convert);
    let resp = backend.complete(&req)?;
    let line = resp.first().lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("");
    if !line.ends_with('?') {
        return Err(ConversionError::ConversionInvalid(line.to_string()));
    }
    Ok(line.to_string())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReviewRow {
    pub sample_id: String,
    pub statement: String,
    pub converted: String,
    pub valid: bool,
}

/// Converts both captions, retrying invalid outputs up to `attempts` times
/// each. Returns the sample with questions filled plus review rows; a
/// sample whose conversion never validates keeps `questions = None`.
pub fn convert_sample(
    sample: &WinogroundSample,
    backend: &dyn ModelBackend,
    attempts: usize,
) -> Result<(WinogroundSample, Vec<ReviewRow>), BackendError> {
    let mut rows = Vec::with_capacity(2);
    let mut converted = Vec::with_capacity(2);
    for caption in &sample.captions {
        let mut last = String::new();
        let mut ok = None;
        for _ in 0..attempts.max(1) {
            match convert_statement(caption, backend) {
                Ok(q) => {
                    ok = Some(q);
                    break;
                }
                Err(ConversionError::ConversionInvalid(text)) => last = text,
                Err(ConversionError::EmptyStatement) => break,
                Err(ConversionError::Backend(e)) => return Err(e),
                Err(ConversionError::QuadIncomplete(_)) => unreachable!(),
            }
        }
        rows.push(ReviewRow {
            sample_id: sample.id.clone(),
            statement: caption.clone(),
            converted: ok.clone().unwrap_or(last),
            valid: ok.is_some(),
        });
        converted.push(ok);
    }
    let mut out = sample.clone();
    out.questions = match (converted[0].take(), converted[1].take()) {
        (Some(a), Some(b)) => Some([a, b]),
        _ => None,
    };
    Ok((out, rows))
}

pub fn write_review_tsv(path: &Path, rows: &[ReviewRow]) -> Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new().delimiter(b'\t').from_path(path)?;
    w.write_record(["sample_id", "statement", "converted_question", "valid"])?;
    for row in rows {
        w.write_record([
            row.sample_id.as_str(),
            row.statement.as_str(),
            row.converted.as_str(),
            if row.valid { "true" } else { "false" },
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Question text for caption `i` under `framing`, as sent to the model.
fn probe(sample: &WinogroundSample, i: usize, framing: Framing) -> Result<String, ConversionError> {
    match framing {
        Framing::Statement => statement_form(&sample.captions[i]),
        Framing::Converted => {
            let questions = sample
                .questions
                .as_ref()
                .ok_or_else(|| ConversionError::QuadIncomplete(sample.id.clone()))?;
            let q = questions[i].trim();
            if q.is_empty() {
                return Err(ConversionError::QuadIncomplete(sample.id.clone()));
            }
            Ok(format!("{CONVERTED_PREFIX} {q}"))
        }
    }
}

/// Caption `i` describes image `i`; every other pairing expects "no".
pub fn build_quad(sample: &WinogroundSample, framing: Framing) -> Result<WinogroundQuad, ConversionError> {
    let q0 = probe(sample, 0, framing)?;
    let q1 = probe(sample, 1, framing)?;
    let item = |img: usize, question: &str, expected| QuadItem {
        image_ref: sample.images[img].clone(),
        question: question.to_string(),
        expected,
    };
    Ok(WinogroundQuad {
        id: sample.id.clone(),
        items: [
            item(0, &q0, YesNo::Yes),
            item(0, &q1, YesNo::No),
            item(1, &q0, YesNo::No),
            item(1, &q1, YesNo::Yes),
        ],
    })
}

/// JSONL with `id, image_0, image_1, caption_0, caption_1` and optional
/// `question_0, question_1`.
pub(super) fn load(path: &Path, ctx: &Ctx) -> Result<Vec<WinogroundSample>, LoadError> {
    let mut out = Vec::new();
    for (line, value) in read_jsonl(path, ctx)? {
        let loc = format!("line {line}");
        let id = ctx.id_field(&value, &loc, "id")?;
        let field = |name: &str| ctx.str_field(&value, &loc, name).map(str::to_string);
        let questions = match (value.get("question_0"), value.get("question_1")) {
            (None, None) => None,
            _ => Some([field("question_0")?, field("question_1")?]),
        };
        out.push(WinogroundSample {
            id,
            images: [field("image_0")?, field("image_1")?],
            captions: [field("caption_0")?, field("caption_1")?],
            questions,
        });
    }
    Ok(out)
}

/// Writes samples in the loader's JSONL shape.
pub fn write_jsonl(path: &Path, samples: &[WinogroundSample]) -> std::io::Result<()> {
    use std::io::Write;
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    for s in samples {
        let mut obj = serde_json::json!({
            "id": s.id,
            "image_0": s.images[0],
            "image_1": s.images[1],
            "caption_0": s.captions[0],
            "caption_1": s.captions[1],
        });
        if let Some([q0, q1]) = &s.questions {
            obj["question_0"] = q0.clone().into();
            obj["question_1"] = q1.clone().into();
        }
        serde_json::to_writer(&mut tmp, &obj)?;
        tmp.write_all(b"\n")?;
    }
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::ScriptedBackend;

    fn sample() -> WinogroundSample {
        WinogroundSample {
            id: "7".into(),
            images: ["a.png".into(), "b.png".into()],
            captions: ["a tree smashed into a car".into(), "a car smashed into a tree".into()],
            questions: None,
        }
    }

    #[test]
    fn statement_framing() {
        assert_eq!(
            statement_form("The taller person hugs the shorter person.  ").unwrap(),
            "Does this describe the image? The taller person hugs the shorter person."
        );
        assert!(matches!(statement_form(" "), Err(ConversionError::EmptyStatement)));
        let quad = build_quad(&sample(), Framing::Statement).unwrap();
        assert!(quad.is_balanced());
        assert_eq!(quad.items[1].question, "Does this describe the image? a car smashed into a tree");
        assert_eq!(quad.items[2].image_ref, "b.png");
    }

    #[test]
    fn converted_framing_needs_questions() {
        assert!(matches!(
            build_quad(&sample(), Framing::Converted),
            Err(ConversionError::QuadIncomplete(_))
        ));
        let mut s = sample();
        s.questions = Some(["Did a tree smash into a car?".into(), "Did a car smash into a tree?".into()]);
        let quad = build_quad(&s, Framing::Converted).unwrap();
        assert_eq!(
            quad.items[0].question,
            "Answer the following yes/no question. Did a tree smash into a car?"
        );
    }

    #[test]
    fn conversion_checks_question_mark() {
        let b = ScriptedBackend::new("llm", |req| {
            assert!(req.image_ref.is_none());
            if req.prompt.ends_with("a tree smashed into a car") {
                Ok(vec!["Did a tree smash into a car?\nextra".into()])
            } else {
                Ok(vec!["A car smashed into a tree.".into()])
            }
        });
        assert_eq!(
            convert_statement("a tree smashed into a car", &b).unwrap(),
            "Did a tree smash into a car?"
        );
        let (out, rows) = convert_sample(&sample(), &b, 2).unwrap();
        assert!(out.questions.is_none());
        assert_eq!(rows.iter().map(|r| r.valid).collect::<Vec<_>>(), vec![true, false]);
        // one call for the first caption, two attempts for the second
        assert_eq!(b.calls(), 1 + 3);
    }
}
