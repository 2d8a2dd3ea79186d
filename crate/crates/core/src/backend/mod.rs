//! Inference backend abstraction.
//!
//! Every model call in the harness goes through [`ModelBackend::complete`].
//! Concrete backends: [`http::HttpBackend`] for chat/completions servers,
//! [`replay::RecordReplayBackend`] for recorded fixtures and
//! [`ScriptedBackend`] for programmatic test doubles.

pub mod http;
pub mod replay;

use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendError {
    #[error("transport failure: {message}")]
    Transport { message: String },
    #[error("request rejected with HTTP {status}: {message}")]
    Request { status: u16, message: String },
    #[error("protocol error: {message}")]
    Protocol { message: String },
    #[error("no recorded response for digest {digest}")]
    ReplayMiss { digest: String },
    #[error("invalid request: {message}")]
    Invalid { message: String },
    #[error("{message}")]
    Other { message: String },
}

impl BackendError {
    pub fn transport(msg: impl Into<String>) -> Self {
        Self::Transport { message: msg.into() }
    }
    pub fn protocol(msg: impl Into<String>) -> Self {
        Self::Protocol { message: msg.into() }
    }
    pub fn invalid(msg: impl Into<String>) -> Self {
        Self::Invalid { message: msg.into() }
    }
    pub fn other(msg: impl Into<String>) -> Self {
        Self::Other { message: msg.into() }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown generation preset `{0}`")]
pub struct UnknownPreset(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeMode {
    Beam,
    Sample,
    Greedy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub mode: DecodeMode,
    pub beam_size: u32,
    pub temperature: f64,
    pub n: u32,
    pub max_new_tokens: u32,
    pub length_penalty: f64,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub omit_image: bool,
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), BackendError> {
        if self.mode == DecodeMode::Beam && self.beam_size < 1 {
            return Err(BackendError::invalid("beam search needs beam_size >= 1"));
        }
        if self.mode == DecodeMode::Sample && (self.temperature.is_nan() || self.temperature <= 0.0) {
            return Err(BackendError::invalid("sampling needs temperature > 0"));
        }
        if self.n < 1 {
            return Err(BackendError::invalid("n must be >= 1"));
        }
        if self.max_new_tokens < 1 {
            return Err(BackendError::invalid("max_new_tokens must be >= 1"));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn with_n(mut self, n: u32) -> Self {
        self.n = n;
        self
    }

    pub fn without_image(mut self, omit: bool) -> Self {
        self.omit_image = omit;
        self
    }
}

/// Named generation settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Short answers: beam 3, 10 new tokens, length penalty -1.
    Answer,
    /// Answers from chatty models: beam 3, 50 new tokens, length penalty -1.
    VerboseAnswer,
    /// Captions: beam 3, 128 new tokens, length penalty +1.
    Caption,
    /// Rationales: same budget as captions.
    Rationale,
    /// One sampled self-consistency path at t = 0.7.
    ConsistencyPath,
    /// Dense caption sampling at t = 0.7.
    DenseCaption,
    /// Verbose-to-short parsing: greedy, 10 new tokens.
    Parse,
    /// Statement-to-question conversion: greedy, 64 new tokens.
    Convert,
}

impl Preset {
    pub const ALL: [Preset; 8] = [
        Preset::Answer,
        Preset::VerboseAnswer,
        Preset::Caption,
        Preset::Rationale,
        Preset::ConsistencyPath,
        Preset::DenseCaption,
        Preset::Parse,
        Preset::Convert,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Answer => "answer",
            Preset::VerboseAnswer => "verbose-answer",
            Preset::Caption => "caption",
            Preset::Rationale => "rationale",
            Preset::ConsistencyPath => "consistency-path",
            Preset::DenseCaption => "dense-caption",
            Preset::Parse => "parse",
            Preset::Convert => "convert",
        }
    }
}

impl FromStr for Preset {
    type Err = UnknownPreset;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| UnknownPreset(s.to_string()))
    }
}

pub fn preset(purpose: Preset) -> GenerationConfig {
    let beam = |max_new_tokens, length_penalty| GenerationConfig {
        mode: DecodeMode::Beam,
        beam_size: 3,
        temperature: 1.0,
        n: 1,
        max_new_tokens,
        length_penalty,
        seed: None,
        omit_image: false,
    };
    let sample = |temperature| GenerationConfig {
        mode: DecodeMode::Sample,
        beam_size: 1,
        temperature,
        n: 1,
        max_new_tokens: 128,
        length_penalty: 1.0,
        seed: None,
        omit_image: false,
    };
    let greedy = |max_new_tokens| GenerationConfig {
        mode: DecodeMode::Greedy,
        beam_size: 1,
        temperature: 1.0,
        n: 1,
        max_new_tokens,
        length_penalty: 0.0,
        seed: None,
        omit_image: false,
    };
    match purpose {
        Preset::Answer => beam(10, -1.0),
        Preset::VerboseAnswer => beam(50, -1.0),
        Preset::Caption | Preset::Rationale => beam(128, 1.0),
        Preset::ConsistencyPath | Preset::DenseCaption => sample(0.7),
        Preset::Parse => greedy(10),
        Preset::Convert => greedy(64),
    }
}

/// Looks a preset up by its tag (`answer`, `verbose-answer`, ...).
pub fn preset_by_name(tag: &str) -> Result<GenerationConfig, UnknownPreset> {
    tag.parse().map(preset)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    Answer,
    Caption,
    Rationale,
    Parse,
    Convert,
    Embed,
}

impl Purpose {
    pub fn is_text_only(self) -> bool {
        matches!(self, Purpose::Parse | Purpose::Convert | Purpose::Embed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendRequest {
    pub prompt: String,
    #[serde(default)]
    pub image_ref: Option<String>,
    pub gen: GenerationConfig,
    pub purpose: Purpose,
}

impl BackendRequest {
    pub fn new(prompt: impl Into<String>, image_ref: Option<&str>, gen: GenerationConfig, purpose: Purpose) -> Self {
        Self {
            prompt: prompt.into(),
            image_ref: image_ref.map(str::to_string),
            gen,
            purpose,
        }
    }

    pub fn text(prompt: impl Into<String>, gen: GenerationConfig, purpose: Purpose) -> Self {
        Self::new(prompt, None, gen, purpose)
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        self.gen.validate()?;
        if self.purpose.is_text_only() && self.image_ref.is_some() {
            return Err(BackendError::invalid(format!(
                "{:?} requests must not carry an image",
                self.purpose
            )));
        }
        Ok(())
    }

    /// The image that actually goes on the wire.
    pub fn wire_image(&self) -> Option<&str> {
        if self.gen.omit_image {
            None
        } else {
            self.image_ref.as_deref()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendResponse {
    pub texts: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<Vec<f64>>,
    #[serde(default)]
    pub latency_ms: u64,
    pub backend_id: String,
}

impl BackendResponse {
    pub fn first(&self) -> &str {
        self.texts.first().map(String::as_str).unwrap_or("")
    }
}

pub trait ModelBackend: Send + Sync {
    fn id(&self) -> &str;
    fn complete(&self, req: &BackendRequest) -> Result<BackendResponse, BackendError>;
}

impl<B: ModelBackend + ?Sized> ModelBackend for std::sync::Arc<B> {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn complete(&self, req: &BackendRequest) -> Result<BackendResponse, BackendError> {
        (**self).complete(req)
    }
}

impl<B: ModelBackend + ?Sized> ModelBackend for &B {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn complete(&self, req: &BackendRequest) -> Result<BackendResponse, BackendError> {
        (**self).complete(req)
    }
}

/// Issues `reqs` with at most `max_in_flight` outstanding. Results line up
/// with requests by index; a failing slot never aborts the others.
pub fn complete_batch(
    backend: &dyn ModelBackend,
    reqs: &[BackendRequest],
    max_in_flight: usize,
) -> Vec<Result<BackendResponse, BackendError>> {
    let workers = max_in_flight.max(1).min(reqs.len());
    if workers <= 1 {
        return reqs.iter().map(|r| backend.complete(r)).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<BackendResponse, BackendError>>>> =
        reqs.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= reqs.len() {
                    break;
                }
                let result = backend.complete(&reqs[i]);
                *slots[i].lock().unwrap() = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| {
            slot.into_inner()
                .unwrap()
                .unwrap_or_else(|| Err(BackendError::other("request slot was never filled")))
        })
        .collect()
}

type Responder = dyn Fn(&BackendRequest) -> Result<Vec<String>, BackendError> + Send + Sync;

/// Backend driven by a closure; handy for tests and for recording fixtures.
pub struct ScriptedBackend {
    id: String,
    responder: Box<Responder>,
    calls: AtomicUsize,
}

impl ScriptedBackend {
    pub fn new(
        id: impl Into<String>,
        responder: impl Fn(&BackendRequest) -> Result<Vec<String>, BackendError> + Send + Sync + 'static,
    ) -> Self {
        Self {
            id: id.into(),
            responder: Box::new(responder),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ModelBackend for ScriptedBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, req: &BackendRequest) -> Result<BackendResponse, BackendError> {
        req.validate()?;
        self.calls.fetch_add(1, Ordering::SeqCst);
        let texts: Vec<String> = (self.responder)(req)?
            .into_iter()
            .map(|t| t.trim().to_string())
            .collect();
        if texts.len() != req.gen.n as usize {
            return Err(BackendError::protocol(format!(
                "expected {} texts, got {}",
                req.gen.n,
                texts.len()
            )));
        }
        Ok(BackendResponse {
            texts,
            scores: None,
            latency_ms: 0,
            backend_id: self.id.clone(),
        })
    }
}
