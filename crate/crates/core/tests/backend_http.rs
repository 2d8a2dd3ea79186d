mod common;

use std::sync::Arc;

use serde_json::{json, Value};

use common::{chat_reply, StubServer};
use vqa_harness::backend::http::{HttpBackend, HttpConfig};
use vqa_harness::backend::replay::{RecordMode, RecordReplayBackend, ReplayStore};
use vqa_harness::backend::{preset, BackendError, BackendRequest, DecodeMode, ModelBackend, Preset, Purpose};
use vqa_harness::embed::EmbeddingProvider;

fn backend(server: &StubServer) -> HttpBackend {
    HttpBackend::new(HttpConfig {
        endpoint: server.url.clone(),
        model: "stub".into(),
        initial_backoff_ms: 1,
        max_backoff_ms: 5,
        timeout_secs: 5,
        ..HttpConfig::default()
    })
    .unwrap()
}

fn answer_req() -> BackendRequest {
    BackendRequest::new(
        "Question: What color is the bus? Answer:",
        Some("https://example.org/bus.jpg"),
        preset(Preset::Answer),
        Purpose::Answer,
    )
}

#[test]
fn retries_server_errors_then_succeeds() {
    let server = StubServer::start(|i, _, _| if i < 2 { (503, "busy".into()) } else { (200, chat_reply(&["red"])) });
    let b = backend(&server);
    let resp = b.complete(&answer_req()).unwrap();
    assert_eq!(resp.texts, vec!["red"]);
    assert_eq!(server.calls(), 3);
}

#[test]
fn gives_up_after_max_retries() {
    let server = StubServer::start(|_, _, _| (500, "down".into()));
    let b = backend(&server);
    let err = b.complete(&answer_req()).unwrap_err();
    assert!(matches!(err, BackendError::Request { status: 500, .. }), "{err:?}");
    assert_eq!(server.calls(), 4);
}

#[test]
fn client_error_is_not_retried() {
    let server = StubServer::start(|_, _, _| (400, "bad request".into()));
    let b = backend(&server);
    let req = BackendRequest::text("Describe.", preset(Preset::Parse), Purpose::Parse);
    assert_eq!(req.gen.mode, DecodeMode::Greedy);
    let err = b.complete(&req).unwrap_err();
    assert!(matches!(err, BackendError::Request { status: 400, .. }));
    assert_eq!(server.calls(), 1);
}

#[test]
fn rejected_beam_falls_back_to_greedy() {
    let server = StubServer::start(|_, _, body| {
        if body.get("use_beam_search").is_some() {
            (400, "unknown field use_beam_search".into())
        } else {
            (200, chat_reply(&["blue"]))
        }
    });
    let b = backend(&server);
    assert_eq!(b.complete(&answer_req()).unwrap().first(), "blue");
    assert_eq!(server.calls(), 2);
    // The fallback sticks: later beam requests go straight to greedy.
    assert_eq!(b.complete(&answer_req()).unwrap().first(), "blue");
    assert_eq!(server.calls(), 3);
    let bodies = server.bodies.lock().unwrap();
    assert_eq!(bodies[0]["use_beam_search"], json!(true));
    assert_eq!(bodies[0]["length_penalty"], json!(-1.0));
    assert!(bodies[1].get("use_beam_search").is_none());
    assert_eq!(bodies[1]["temperature"], json!(0.0));
}

#[test]
fn invalid_json_is_a_protocol_error() {
    let server = StubServer::start(|_, _, _| (200, "{not json".into()));
    let err = backend(&server).complete(&answer_req()).unwrap_err();
    assert!(matches!(err, BackendError::Protocol { .. }), "{err:?}");
    assert_eq!(server.calls(), 1);
}

#[test]
fn wrong_choice_count_is_a_protocol_error() {
    let server = StubServer::start(|_, _, _| (200, chat_reply(&["a", "b"])));
    let err = backend(&server).complete(&answer_req()).unwrap_err();
    assert!(matches!(err, BackendError::Protocol { .. }));
}

#[test]
fn omit_image_keeps_image_off_the_wire() {
    let server = StubServer::start(|_, _, _| (200, chat_reply(&["yes"])));
    let b = backend(&server);
    let mut req = answer_req();
    req.gen = req.gen.without_image(true);
    b.complete(&req).unwrap();
    b.complete(&answer_req()).unwrap();
    let bodies = server.bodies.lock().unwrap();
    let blind = bodies[0].to_string();
    assert!(!blind.contains("image_url") && !blind.contains("bus.jpg"), "{blind}");
    assert_eq!(bodies[0]["messages"][0]["content"], json!(req.prompt));
    assert!(bodies[1].to_string().contains("image_url"));
}

#[test]
fn sampling_returns_n_texts_in_index_order() {
    let server = StubServer::start(|_, path, body| {
        assert_eq!(path, "/v1/chat/completions");
        assert_eq!(body["n"], json!(3));
        assert_eq!(body["temperature"], json!(0.7));
        assert_eq!(body["seed"], json!(11));
        let choices = json!({"choices": [
            {"index": 2, "message": {"content": "c"}},
            {"index": 0, "message": {"content": "a"}},
            {"index": 1, "message": {"content": "b"}},
        ]});
        (200, choices.to_string())
    });
    let gen = preset(Preset::ConsistencyPath).with_n(3).with_seed(11);
    let req = BackendRequest::new("Think.", Some("https://example.org/x.jpg"), gen, Purpose::Rationale);
    assert_eq!(backend(&server).complete(&req).unwrap().texts, vec!["a", "b", "c"]);
}

#[test]
fn embeddings_endpoint() {
    let server = StubServer::start(|_, path, body| {
        assert_eq!(path, "/v1/embeddings");
        assert_eq!(body["input"], json!("what is this?"));
        (200, json!({"data": [{"embedding": [0.5, -1.0, 2.0]}]}).to_string())
    });
    let b = backend(&server);
    assert_eq!(b.embed("what is this?").unwrap(), vec![0.5, -1.0, 2.0]);
    assert!(b.embed("   ").is_err());
    assert_eq!(server.calls(), 1);
}

#[test]
fn record_then_replay_without_server() {
    let dir = tempfile::tempdir().unwrap();
    let store_path = dir.path().join("store.jsonl");
    let expected;
    {
        let server = StubServer::start(|_, _, body: &Value| {
            let prompt = body["messages"][0]["content"][0]["text"].as_str().unwrap_or("").to_string();
            (200, chat_reply(&[&format!("echo {}", prompt.len())]))
        });
        let store = Arc::new(ReplayStore::open(&store_path).unwrap());
        let rec = RecordReplayBackend::new(RecordMode::Record, store, Some(Box::new(backend(&server)))).unwrap();
        expected = rec.complete(&answer_req()).unwrap().texts;
        assert_eq!(server.calls(), 1);
    }
    let replay = RecordReplayBackend::replay(Arc::new(ReplayStore::open(&store_path).unwrap()));
    assert_eq!(replay.complete(&answer_req()).unwrap().texts, expected);
    let mut other = answer_req();
    other.prompt.push('!');
    assert!(matches!(replay.complete(&other), Err(BackendError::ReplayMiss { .. })));
}
