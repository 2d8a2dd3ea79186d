//! Blocking HTTP client for chat/completions-style inference servers.

use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{BackendError, BackendRequest, BackendResponse, DecodeMode, ModelBackend};
use crate::embed::{EmbedError, EmbeddingProvider};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpConfig {
    /// Base URL, e.g. `http://localhost:8000/v1`.
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key, if any.
    pub api_key_env: Option<String>,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
    pub max_in_flight: usize,
    /// Dimension reported for the embeddings endpoint; 0 = learn on first call.
    pub embedding_dimension: usize,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://localhost:8000/v1".into(),
            model: "default".into(),
            api_key_env: None,
            timeout_secs: 120,
            max_retries: 3,
            initial_backoff_ms: 250,
            max_backoff_ms: 8_000,
            max_in_flight: 4,
            embedding_dimension: 0,
        }
    }
}

/// Counting semaphore bounding concurrent requests.
struct InFlight {
    limit: usize,
    active: Mutex<usize>,
    freed: Condvar,
}

impl InFlight {
    fn new(limit: usize) -> Self {
        Self {
            limit: limit.max(1),
            active: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> InFlightGuard<'_> {
        let mut active = self.active.lock().unwrap();
        while *active >= self.limit {
            active = self.freed.wait(active).unwrap();
        }
        *active += 1;
        InFlightGuard(self)
    }
}

struct InFlightGuard<'a>(&'a InFlight);

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        *self.0.active.lock().unwrap() -= 1;
        self.0.freed.notify_one();
    }
}

enum Attempt {
    Done(Value),
    Retry(BackendError),
    Fail(BackendError),
}

pub struct HttpBackend {
    config: HttpConfig,
    /// Set once the server has refused beam-search fields.
    beam_rejected: AtomicBool,
    client: reqwest::blocking::Client,
    api_key: Option<String>,
    in_flight: InFlight,
    id: String,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| BackendError::other(format!("cannot build HTTP client: {e}")))?;
        let api_key = match &config.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                BackendError::invalid(format!("environment variable {var} is not set"))
            })?),
            None => None,
        };
        let id = format!("{}@{}", config.model, config.endpoint);
        Ok(Self {
            in_flight: InFlight::new(config.max_in_flight),
            beam_rejected: AtomicBool::new(false),
            config,
            client,
            api_key,
            id,
        })
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{}", self.config.endpoint.trim_end_matches('/'), path)
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let ms = self
            .config
            .initial_backoff_ms
            .saturating_mul(1u64 << attempt.min(20))
            .min(self.config.max_backoff_ms);
        Duration::from_millis(ms)
    }

    fn attempt(&self, url: &str, body: &Value) -> Attempt {
        let _slot = self.in_flight.acquire();
        let mut builder = self.client.post(url).json(body);
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let resp = match builder.send() {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(BackendError::transport(e.to_string())),
        };
        let status = resp.status();
        let text = match resp.text() {
            Ok(t) => t,
            Err(e) => return Attempt::Retry(BackendError::transport(e.to_string())),
        };
        if status.is_success() {
            return match serde_json::from_str(&text) {
                Ok(v) => Attempt::Done(v),
                Err(e) => Attempt::Fail(BackendError::protocol(format!("invalid JSON body: {e}"))),
            };
        }
        let err = BackendError::Request {
            status: status.as_u16(),
            message: text.chars().take(500).collect(),
        };
        if status.as_u16() == 429 || status.is_server_error() {
            Attempt::Retry(err)
        } else {
            Attempt::Fail(err)
        }
    }

    /// POSTs `body`, retrying transport failures, 429 and 5xx with
    /// exponential backoff.
    fn post_json(&self, path: &str, body: &Value) -> Result<Value, BackendError> {
        let url = self.url(path);
        let mut attempt = 0;
        loop {
            match self.attempt(&url, body) {
                Attempt::Done(v) => return Ok(v),
                Attempt::Fail(e) => return Err(e),
                Attempt::Retry(e) if attempt >= self.config.max_retries => {
                    return Err(match e {
                        BackendError::Request { .. } => e,
                        other => BackendError::transport(format!(
                            "gave up after {} attempts: {other}",
                            attempt + 1
                        )),
                    })
                }
                Attempt::Retry(e) => {
                    log::debug!("retrying {url} after: {e}");
                    std::thread::sleep(self.backoff(attempt));
                    attempt += 1;
                }
            }
        }
    }

    pub fn chat_body(&self, req: &BackendRequest, with_beam: bool) -> Result<Value, BackendError> {
        let content = match req.wire_image() {
            Some(image) => json!([
                {"type": "text", "text": req.prompt},
                {"type": "image_url", "image_url": {"url": image_url(image)?}},
            ]),
            None => Value::String(req.prompt.clone()),
        };
        let gen = &req.gen;
        let mut body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": content}],
            "max_tokens": gen.max_new_tokens,
            "n": gen.n,
        });
        let obj = body.as_object_mut().unwrap();
        match gen.mode {
            DecodeMode::Sample => {
                obj.insert("temperature".into(), json!(gen.temperature));
            }
            DecodeMode::Greedy | DecodeMode::Beam => {
                obj.insert("temperature".into(), json!(0.0));
            }
        }
        if let Some(seed) = gen.seed {
            obj.insert("seed".into(), json!(seed));
        }
        if gen.mode == DecodeMode::Beam && with_beam {
            obj.insert("use_beam_search".into(), json!(true));
            obj.insert("best_of".into(), json!(gen.beam_size.max(gen.n)));
            obj.insert("length_penalty".into(), json!(gen.length_penalty));
        }
        Ok(body)
    }
}

/// URLs and data URIs pass through; anything else is read as a local file
/// and inlined as base64.
fn image_url(image: &str) -> Result<String, BackendError> {
    if image.starts_with("http://") || image.starts_with("https://") || image.starts_with("data:") {
        return Ok(image.to_string());
    }
    let path = Path::new(image);
    let bytes = std::fs::read(path)
        .map_err(|e| BackendError::invalid(format!("cannot read image {image}: {e}")))?;
    let mime = match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("png") => "image/png",
        Some("gif") => "image/gif",
        Some("webp") => "image/webp",
        _ => "image/jpeg",
    };
    let encoded = base64::engine::general_purpose::STANDARD.encode(bytes);
    Ok(format!("data:{mime};base64,{encoded}"))
}

fn parse_choices(body: &Value, expected: usize) -> Result<Vec<String>, BackendError> {
    let choices = body
        .get("choices")
        .and_then(Value::as_array)
        .ok_or_else(|| BackendError::protocol("response has no `choices` array"))?;
    let mut indexed = Vec::with_capacity(choices.len());
    for (pos, choice) in choices.iter().enumerate() {
        let index = choice.get("index").and_then(Value::as_u64).unwrap_or(pos as u64);
        let text = choice
            .pointer("/message/content")
            .or_else(|| choice.get("text"))
            .and_then(Value::as_str)
            .ok_or_else(|| BackendError::protocol("choice carries no text"))?;
        indexed.push((index, text.trim().to_string()));
    }
    indexed.sort_by_key(|(i, _)| *i);
    if indexed.len() != expected {
        return Err(BackendError::protocol(format!(
            "expected {expected} choices, got {}",
            indexed.len()
        )));
    }
    Ok(indexed.into_iter().map(|(_, t)| t).collect())
}

impl ModelBackend for HttpBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, req: &BackendRequest) -> Result<BackendResponse, BackendError> {
        req.validate()?;
        let started = Instant::now();
        let wants_beam = req.gen.mode == DecodeMode::Beam && !self.beam_rejected.load(Ordering::Relaxed);
        let body = self.chat_body(req, wants_beam)?;
        let value = match self.post_json("chat/completions", &body) {
            Err(BackendError::Request { status, message }) if wants_beam && (status == 400 || status == 422) => {
                log::warn!("server rejected beam-search fields (HTTP {status}: {message}); using greedy decoding");
                self.beam_rejected.store(true, Ordering::Relaxed);
                self.post_json("chat/completions", &self.chat_body(req, false)?)?
            }
            other => other?,
        };
        let texts = parse_choices(&value, req.gen.n as usize)?;
        Ok(BackendResponse {
            texts,
            scores: None,
            latency_ms: started.elapsed().as_millis() as u64,
            backend_id: self.id.clone(),
        })
    }
}

impl EmbeddingProvider for HttpBackend {
    fn dimension(&self) -> usize {
        self.config.embedding_dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        if text.trim().is_empty() {
            return Err(EmbedError::EmbeddingUnavailable("text is empty".into()));
        }
        let body = json!({"model": self.config.model, "input": text});
        let value = self
            .post_json("embeddings", &body)
            .map_err(|e| EmbedError::EmbeddingUnavailable(e.to_string()))?;
        let vector = value
            .pointer("/data/0/embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| EmbedError::EmbeddingUnavailable("response has no data[0].embedding".into()))?;
        let vector: Option<Vec<f64>> = vector.iter().map(Value::as_f64).collect();
        let vector = vector.ok_or_else(|| EmbedError::EmbeddingUnavailable("non-numeric embedding".into()))?;
        let dim = self.config.embedding_dimension;
        if dim != 0 && vector.len() != dim {
            return Err(EmbedError::EmbeddingUnavailable(format!(
                "expected {dim} dimensions, got {}",
                vector.len()
            )));
        }
        Ok(vector)
    }
}
