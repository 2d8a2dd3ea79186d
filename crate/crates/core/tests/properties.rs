use proptest::prelude::*;
use serde_json::{Map, Value};

use vqa_harness::backend::replay::{canonical_json, request_digest};
use vqa_harness::backend::{complete_batch, preset, BackendRequest, ModelBackend, Preset, Purpose, ScriptedBackend};
use vqa_harness::cot::{extract_final_answer, majority_vote, tally_votes};
use vqa_harness::exemplars::{select_exemplars_in, Exemplar, SelectionConfig};
use vqa_harness::metrics::{normalize, rouge_l, rouge_n, score_batch, vqa_accuracy, Grader, ReferenceAnswers};
use vqa_harness::ExecMode;

fn words() -> impl Strategy<Value = String> {
    prop::collection::vec(
        prop::sample::select(vec![
            "the", "a", "dog", "dogs", "red", "two", "2", "is", "on", "mat", "answer", "final", "cake", "icing",
        ]),
        0..10,
    )
    .prop_map(|w| w.join(" "))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn normalize_is_idempotent(s in "\\PC{0,40}") {
        let once = normalize(&s);
        prop_assert_eq!(normalize(&once), once);
    }

    #[test]
    fn extraction_is_a_fixpoint(body in words(), answer in words(), marker in prop::sample::select(vec![
        "The answer is", "So the answer is", "The final answer:", "",
    ])) {
        let raw = format!("{body}. {marker} {answer}.");
        let once = extract_final_answer(&raw);
        prop_assert_eq!(extract_final_answer(&once), once);
    }

    #[test]
    fn vote_winner_is_a_member(answers in prop::collection::vec(words(), 1..15)) {
        let winner = majority_vote(&answers, normalize).unwrap();
        prop_assert!(answers.contains(&winner));
        let tally = tally_votes(&answers, normalize);
        prop_assert_eq!(tally.iter().map(|v| v.count).sum::<usize>(), answers.len());
    }

    #[test]
    fn vqa_accuracy_bounds(cand in words(), refs in prop::collection::vec(words(), 1..12)) {
        let ra = ReferenceAnswers::new(refs).unwrap();
        let s = vqa_accuracy(&cand, &ra);
        prop_assert!([0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0].contains(&s));
    }

    #[test]
    fn rouge_bounds(a in words(), b in words()) {
        for s in [rouge_n(&a, &b, 1), rouge_n(&a, &b, 2), rouge_l(&a, &b)] {
            prop_assert!((0.0..=1.0).contains(&s));
        }
        prop_assert!(rouge_l(&a, &b) <= rouge_n(&a, &b, 1) + 1e-12);
        prop_assert!((rouge_l(&a, &b) - rouge_l(&b, &a)).abs() < 1e-12);
    }

    #[test]
    fn selection_matches_brute_force(
        query in prop::collection::vec(-1.0f64..1.0, 4),
        pool in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 4), 0..300),
        k in 0usize..=5,
    ) {
        prop_assume!(query.iter().any(|x| *x != 0.0));
        let pool: Vec<Exemplar> = pool.into_iter().enumerate()
            .map(|(i, e)| Exemplar::new(format!("q{i}"), "a").with_embedding(e)).collect();
        let cfg = SelectionConfig { k, similarity_cap: 0.6 };
        let cos = |v: &[f64]| {
            let dot: f64 = query.iter().zip(v).map(|(a, b)| a * b).sum();
            let n = |x: &[f64]| x.iter().map(|y| y * y).sum::<f64>().sqrt();
            dot / (n(&query) * n(v))
        };
        let mut want: Vec<(usize, f64)> = pool.iter().enumerate()
            .filter(|(_, e)| e.embedding.iter().any(|x| *x != 0.0))
            .map(|(i, e)| (i, cos(&e.embedding).clamp(-1.0, 1.0)))
            .filter(|(_, s)| *s < 0.6)
            .collect();
        want.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        want.truncate(k);
        for mode in [ExecMode::Sequential, ExecMode::Parallel] {
            let got = select_exemplars_in(mode, &query, &pool, &cfg).unwrap();
            prop_assert_eq!(got.iter().map(|s| s.index).collect::<Vec<_>>(), want.iter().map(|w| w.0).collect::<Vec<_>>());
        }
    }

    #[test]
    fn parallel_scoring_equals_sequential(items in prop::collection::vec((words(), prop::collection::vec(words(), 1..10)), 0..50)) {
        let items: Vec<(String, Grader)> = items.into_iter()
            .map(|(c, r)| (c, Grader::for_references(ReferenceAnswers::new(r).unwrap()))).collect();
        prop_assert_eq!(score_batch(ExecMode::Parallel, &items), score_batch(ExecMode::Sequential, &items));
    }

    #[test]
    fn batch_results_stay_aligned(prompts in prop::collection::vec("[a-z]{1,12}", 0..40), inflight in 1usize..8) {
        let backend = ScriptedBackend::new("echo", |req| {
            if req.prompt.starts_with('x') {
                Err(vqa_harness::backend::BackendError::other("boom"))
            } else {
                Ok(vec![req.prompt.to_uppercase()])
            }
        });
        let reqs: Vec<BackendRequest> = prompts.iter()
            .map(|p| BackendRequest::text(p.clone(), preset(Preset::Answer), Purpose::Answer)).collect();
        let batched = complete_batch(&backend, &reqs, inflight);
        let sequential: Vec<_> = reqs.iter().map(|r| backend.complete(r)).collect();
        prop_assert_eq!(batched.len(), reqs.len());
        for ((b, s), p) in batched.iter().zip(&sequential).zip(&prompts) {
            match (b, s) {
                (Ok(b), Ok(s)) => {
                    prop_assert_eq!(&b.texts, &s.texts);
                    prop_assert_eq!(b.first(), p.to_uppercase());
                }
                (Err(b), Err(s)) => prop_assert_eq!(b, s),
                _ => prop_assert!(false, "batched and sequential disagree for {}", p),
            }
        }
    }

    #[test]
    fn canonical_json_ignores_key_order(entries in prop::collection::btree_map("[a-z]{1,6}", any::<i32>(), 0..10)) {
        let forward: Map<String, Value> = entries.iter().map(|(k, v)| (k.clone(), Value::from(*v))).collect();
        let backward: Map<String, Value> = entries.iter().rev().map(|(k, v)| (k.clone(), Value::from(*v))).collect();
        let a = Value::Object(forward);
        let b = Value::Object(backward);
        prop_assert_eq!(canonical_json(&a), canonical_json(&b));
        let back: Value = serde_json::from_str(&canonical_json(&a)).unwrap();
        prop_assert_eq!(back, a);
    }

    #[test]
    fn request_digest_tracks_content(prompt in "\\PC{1,30}", seed in any::<u64>()) {
        let gen = preset(Preset::ConsistencyPath).with_seed(seed);
        let a = BackendRequest::new(prompt.clone(), Some("img.jpg"), gen.clone(), Purpose::Rationale);
        let same = BackendRequest::new(prompt.clone(), Some("img.jpg"), gen.clone(), Purpose::Rationale);
        prop_assert_eq!(request_digest(&a), request_digest(&same));
        let other_seed = BackendRequest::new(prompt.clone(), Some("img.jpg"), gen.with_seed(seed.wrapping_add(1)), Purpose::Rationale);
        prop_assert_ne!(request_digest(&a), request_digest(&other_seed));
        let no_image = BackendRequest::new(prompt, None, preset(Preset::ConsistencyPath).with_seed(seed), Purpose::Rationale);
        prop_assert_ne!(request_digest(&a), request_digest(&no_image));
    }
}
