#![allow(dead_code)]

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use serde_json::Value;
use sha2::{Digest, Sha256};

use vqa_harness::backend::{BackendRequest, DecodeMode, Purpose, ScriptedBackend};
use vqa_harness::datasets::{write_canonical, QuestionRecord};
use vqa_harness::metrics::ReferenceAnswers;

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

type Handler = dyn Fn(usize, &str, &Value) -> (u16, String) + Send + Sync;

/// Minimal HTTP/1.1 server on 127.0.0.1 answering each POST through
/// `handler(call_index, path, json_body)`.
pub struct StubServer {
    pub url: String,
    pub calls: Arc<AtomicUsize>,
    pub bodies: Arc<Mutex<Vec<Value>>>,
    stop: Arc<AtomicBool>,
    addr: std::net::SocketAddr,
    thread: Option<JoinHandle<()>>,
}

impl StubServer {
    pub fn start(handler: impl Fn(usize, &str, &Value) -> (u16, String) + Send + Sync + 'static) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let calls = Arc::new(AtomicUsize::new(0));
        let bodies = Arc::new(Mutex::new(Vec::new()));
        let stop = Arc::new(AtomicBool::new(false));
        let handler: Arc<Handler> = Arc::new(handler);
        let thread = {
            let (calls, bodies, stop) = (calls.clone(), bodies.clone(), stop.clone());
            std::thread::spawn(move || {
                for stream in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(stream) = stream else { continue };
                    let (calls, bodies, handler) = (calls.clone(), bodies.clone(), handler.clone());
                    std::thread::spawn(move || serve(stream, &calls, &bodies, handler.as_ref()));
                }
            })
        };
        StubServer {
            url: format!("http://{addr}/v1"),
            calls,
            bodies,
            stop,
            addr,
            thread: Some(thread),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

fn serve(stream: TcpStream, calls: &AtomicUsize, bodies: &Mutex<Vec<Value>>, handler: &Handler) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut request_line = String::new();
    if reader.read_line(&mut request_line).unwrap_or(0) == 0 {
        return;
    }
    let path = request_line.split_whitespace().nth(1).unwrap_or("/").to_string();
    let mut length = 0usize;
    loop {
        let mut line = String::new();
        reader.read_line(&mut line).unwrap();
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                length = v.trim().parse().unwrap();
            }
        }
    }
    let mut body = vec![0u8; length];
    reader.read_exact(&mut body).unwrap();
    let json: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
    let index = calls.fetch_add(1, Ordering::SeqCst);
    bodies.lock().unwrap().push(json.clone());
    let (status, text) = handler(index, &path, &json);
    let mut stream = stream;
    let _ = write!(
        stream,
        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
        text.len()
    );
    let _ = stream.flush();
}

pub fn chat_reply(texts: &[&str]) -> String {
    let choices: Vec<Value> = texts
        .iter()
        .enumerate()
        .map(|(i, t)| serde_json::json!({"index": i, "message": {"role": "assistant", "content": t}}))
        .collect();
    serde_json::json!({ "choices": choices }).to_string()
}

pub const VOCAB: [&str; 12] = [
    "red", "blue", "two", "3", "dog", "cats", "racing", "yes", "no", "icing", "the table", "a phone",
];

fn hash_u64(parts: &[&str]) -> u64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0u8]);
    }
    u64::from_le_bytes(h.finalize()[..8].try_into().unwrap())
}

fn pick(parts: &[&str]) -> &'static str {
    VOCAB[(hash_u64(parts) % VOCAB.len() as u64) as usize]
}

/// Deterministic stand-in for a vision-language model: every output is a
/// pure function of the request.
pub fn fake_model() -> ScriptedBackend {
    ScriptedBackend::new("fake-vlm", |req: &BackendRequest| {
        let image = req.image_ref.as_deref().unwrap_or("-");
        let seed = req.gen.seed.map(|s| s.to_string()).unwrap_or_default();
        let out = (0..req.gen.n)
            .map(|i| {
                let i = i.to_string();
                let key = [req.prompt.as_str(), image, seed.as_str(), i.as_str()];
                match req.purpose {
                    Purpose::Answer => {
                        let a = pick(&key);
                        if hash_u64(&key).is_multiple_of(3) {
                            format!("It looks like {a} to me.")
                        } else {
                            a.to_string()
                        }
                    }
                    Purpose::Rationale => {
                        let a = pick(&key);
                        format!("The picture shows {}. The answer is {a}.", pick(&[image, "scene"]))
                    }
                    Purpose::Caption if req.image_ref.is_none() => {
                        format!("A scene with {} and {}.", pick(&key), pick(&[req.prompt.as_str(), "x"]))
                    }
                    Purpose::Caption => {
                        let sampled = req.gen.mode == DecodeMode::Sample;
                        format!("A photo of {} {}", pick(&key), if sampled { "outdoors" } else { "indoors" })
                    }
                    Purpose::Parse => {
                        let input = req.prompt.rsplit("Input: ").next().unwrap_or("");
                        let verbose = input.trim_end_matches("Short answer:").trim();
                        let last = verbose
                            .trim_end_matches(|c: char| !c.is_alphanumeric())
                            .rsplit(' ')
                            .next()
                            .unwrap_or("");
                        last.to_string()
                    }
                    Purpose::Convert | Purpose::Embed => "Is it?".to_string(),
                }
            })
            .collect();
        Ok(out)
    })
}

/// `n` open-ended records with ten-answer reference multisets drawn from
/// `VOCAB`, plus a few multiple-choice and untyped ones.
pub fn synthetic_records(n: usize) -> Vec<QuestionRecord> {
    let types = [Some("number"), Some("color"), Some("yes/no"), None];
    (0..n)
        .map(|i| {
            let id = format!("q{i:03}");
            let refs: Vec<String> = (0..10)
                .map(|j| {
                    let skew = if j < 4 { "0" } else { "x" };
                    let jj = j.to_string();
                    pick(&[&id, skew, if j < 4 { "" } else { &jj }]).to_string()
                })
                .collect();
            let mc = i % 5 == 4;
            let options = mc.then(|| vec!["red".to_string(), "blue".to_string(), "dog".to_string(), "icing".to_string()]);
            QuestionRecord {
                question: format!("Question number {i} about the {}?", pick(&[&id, "object"])),
                image_ref: format!("images/{id}.jpg"),
                options,
                correct_option: mc.then_some(i % 4),
                refs: ReferenceAnswers::new(refs).unwrap(),
                dataset: "synthetic".into(),
                question_type: types[i % types.len()].map(str::to_string),
                split: "val".into(),
                metadata: BTreeMap::new(),
                id,
            }
        })
        .collect()
}

pub fn write_synthetic(dir: &Path, n: usize) -> PathBuf {
    let path = dir.join("dataset.jsonl");
    write_canonical(&path, &synthetic_records(n)).unwrap();
    path
}

/// Results JSONL with `timing_ms` removed from every line.
pub fn without_timing(path: &Path) -> String {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|line| {
            let mut v: Value = serde_json::from_str(line).unwrap();
            v.as_object_mut().unwrap().remove("timing_ms");
            v.to_string()
        })
        .collect::<Vec<_>>()
        .join("\n")
}
