//! Caption generation: dense (sampled then fused), grounded and
//! question-guided captions, with a shared JSONL-backed cache.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::replay::sha256_hex;
use crate::backend::{preset, BackendError, BackendRequest, DecodeMode, GenerationConfig, ModelBackend, Preset, Purpose};
use crate::templates::{builtin_registry, render_captioning, PromptContext, TemplateError};

/// Fusion task line and demonstrations (version 1).
pub const FUSION_PROMPT: &str = include_str!("../assets/prompts/caption_fusion_v1.txt");

pub const DEFAULT_DENSE_SAMPLES: usize = 5;

#[derive(Debug, Error)]
pub enum CaptionError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("fused caption is empty")]
    FusionEmpty,
    #[error("context already has a caption")]
    CaptionAlreadySet,
    #[error("invalid caption request: {0}")]
    Precondition(String),
    #[error("caption cache {path}: {message}")]
    Cache { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptionStrategy {
    Dense,
    Grounded,
    QuestionGuided,
}

impl CaptionStrategy {
    fn tag(self) -> &'static str {
        match self {
            CaptionStrategy::Dense => "dense",
            CaptionStrategy::Grounded => "grounded",
            CaptionStrategy::QuestionGuided => "question_guided",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaptionRequest {
    pub image_ref: String,
    pub strategy: CaptionStrategy,
    pub question: Option<String>,
    pub n_samples: usize,
}

impl CaptionRequest {
    pub fn dense(image_ref: impl Into<String>, n_samples: usize) -> Self {
        Self {
            image_ref: image_ref.into(),
            strategy: CaptionStrategy::Dense,
            question: None,
            n_samples,
        }
    }

    pub fn grounded(image_ref: impl Into<String>) -> Self {
        Self {
            image_ref: image_ref.into(),
            strategy: CaptionStrategy::Grounded,
            question: None,
            n_samples: 1,
        }
    }

    pub fn question_guided(image_ref: impl Into<String>, question: impl Into<String>) -> Self {
        Self {
            image_ref: image_ref.into(),
            strategy: CaptionStrategy::QuestionGuided,
            question: Some(question.into()),
            n_samples: 1,
        }
    }

    pub fn validate(&self) -> Result<(), CaptionError> {
        let has_question = self.question.as_deref().is_some_and(|q| !q.trim().is_empty());
        match self.strategy {
            CaptionStrategy::QuestionGuided if !has_question => {
                Err(CaptionError::Precondition("question-guided captions need a question".into()))
            }
            CaptionStrategy::Dense | CaptionStrategy::Grounded if self.question.is_some() => Err(
                CaptionError::Precondition("only question-guided captions take a question".into()),
            ),
            CaptionStrategy::Dense if self.n_samples < 2 => {
                Err(CaptionError::Precondition("dense captions need at least 2 samples".into()))
            }
            _ => Ok(()),
        }
    }

    /// `(image_ref, strategy, question digest)` cache key.
    pub fn cache_key(&self) -> String {
        let qdigest = match &self.question {
            Some(q) => sha256_hex(q.trim().as_bytes())[..16].to_string(),
            None => "-".to_string(),
        };
        format!("{}|{}|{}", self.image_ref, self.strategy.tag(), qdigest)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Caption {
    pub text: String,
    pub strategy: CaptionStrategy,
    pub provenance: Vec<String>,
}

/// Trims and folds a caption onto one line.
fn single_paragraph(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn caption_gen() -> GenerationConfig {
    preset(Preset::Caption)
}

fn dense_gen(n: usize) -> GenerationConfig {
    let mut gen = preset(Preset::DenseCaption);
    gen.n = n as u32;
    gen
}

/// Samples `n` captions from the captioning backend with the `a-photo-of`
/// prompt, in backend order.
pub fn sample_raw_captions(
    image_ref: &str,
    n: usize,
    backend: &dyn ModelBackend,
    gen: &GenerationConfig,
) -> Result<Vec<String>, CaptionError> {
    if n < 1 {
        return Err(CaptionError::Precondition("n must be >= 1".into()));
    }
    let registry = builtin_registry();
    let prompt = render_captioning(registry.get("a-photo-of")?, None)?;
    let mut gen = gen.clone();
    gen.n = n as u32;
    if n > 1 && gen.mode == DecodeMode::Beam {
        gen.beam_size = gen.beam_size.max(n as u32);
    }
    let req = BackendRequest::new(prompt.text, Some(image_ref), gen, Purpose::Caption);
    let resp = backend.complete(&req)?;
    Ok(resp.texts.iter().map(|t| single_paragraph(t)).collect())
}

pub fn build_fusion_prompt<S: AsRef<str>>(raws: &[S]) -> String {
    let mut prompt = String::from(FUSION_PROMPT);
    prompt.push_str("\nCaptions:\n");
    for raw in raws {
        prompt.push_str("- ");
        prompt.push_str(&single_paragraph(raw.as_ref()));
        prompt.push('\n');
    }
    prompt.push_str("Description:");
    prompt
}

/// Condenses several raw captions into one through a text-only call.
pub fn fuse_captions<S: AsRef<str>>(raws: &[S], backend: &dyn ModelBackend) -> Result<Caption, CaptionError> {
    if raws.len() < 2 {
        return Err(CaptionError::Precondition("fusion needs at least 2 raw captions".into()));
    }
    let req = BackendRequest::text(build_fusion_prompt(raws), caption_gen(), Purpose::Caption);
    let resp = backend.complete(&req)?;
    let first_block = resp.first().split("\n\n").next().unwrap_or("");
    let text = single_paragraph(first_block);
    if text.is_empty() {
        return Err(CaptionError::FusionEmpty);
    }
    Ok(Caption {
        text,
        strategy: CaptionStrategy::Dense,
        provenance: raws.iter().map(|r| r.as_ref().to_string()).collect(),
    })
}

pub fn question_guided_caption(
    image_ref: &str,
    question: &str,
    backend: &dyn ModelBackend,
    gen: &GenerationConfig,
) -> Result<Caption, CaptionError> {
    if question.trim().is_empty() {
        return Err(CaptionError::Precondition("question is empty".into()));
    }
    let registry = builtin_registry();
    let prompt = render_captioning(registry.get("q-guided-cap")?, Some(question))?;
    let req = BackendRequest::new(prompt.text, Some(image_ref), gen.clone(), Purpose::Caption);
    let raw = backend.complete(&req)?.first().to_string();
    caption_from(raw, CaptionStrategy::QuestionGuided)
}

/// Asks a grounding-capable backend for a caption; entity spans are kept
/// as generated.
pub fn grounded_caption(
    image_ref: &str,
    backend: &dyn ModelBackend,
    gen: &GenerationConfig,
) -> Result<Caption, CaptionError> {
    let registry = builtin_registry();
    let prompt = render_captioning(registry.get("a-photo-of")?, None)?;
    let req = BackendRequest::new(prompt.text, Some(image_ref), gen.clone(), Purpose::Caption);
    let raw = backend.complete(&req)?.first().to_string();
    caption_from(raw, CaptionStrategy::Grounded)
}

fn caption_from(raw: String, strategy: CaptionStrategy) -> Result<Caption, CaptionError> {
    let text = single_paragraph(&raw);
    if text.is_empty() {
        return Err(BackendError::protocol("backend returned an empty caption").into());
    }
    Ok(Caption {
        text,
        strategy,
        provenance: vec![raw],
    })
}

pub fn attach_caption(ctx: &PromptContext, caption: &Caption) -> Result<PromptContext, CaptionError> {
    if ctx.caption.is_some() {
        return Err(CaptionError::CaptionAlreadySet);
    }
    let mut out = ctx.clone();
    out.caption = Some(caption.text.clone());
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CacheLine {
    key: String,
    strategy: CaptionStrategy,
    text: String,
    provenance: Vec<String>,
}

/// Concurrent caption cache, optionally persisted as append-only JSONL.
/// Identical keys resolve last-writer-wins.
#[derive(Default)]
pub struct CaptionCache {
    entries: RwLock<HashMap<String, Caption>>,
    file: Option<(PathBuf, Mutex<Option<File>>)>,
}

impl CaptionCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self, CaptionError> {
        let path = path.as_ref().to_path_buf();
        let err = |message: String| CaptionError::Cache {
            path: path.display().to_string(),
            message,
        };
        let mut entries = HashMap::new();
        if path.exists() {
            let file = File::open(&path).map_err(|e| err(e.to_string()))?;
            for (i, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| err(e.to_string()))?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: CacheLine =
                    serde_json::from_str(&line).map_err(|e| err(format!("line {}: {e}", i + 1)))?;
                entries.insert(
                    entry.key,
                    Caption {
                        text: entry.text,
                        strategy: entry.strategy,
                        provenance: entry.provenance,
                    },
                );
            }
        }
        Ok(Self {
            entries: RwLock::new(entries),
            file: Some((path, Mutex::new(None))),
        })
    }

    pub fn get(&self, key: &str) -> Option<Caption> {
        self.entries.read().unwrap().get(key).cloned()
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn put(&self, key: &str, caption: &Caption) -> Result<(), CaptionError> {
        if let Some((path, writer)) = &self.file {
            let err = |message: String| CaptionError::Cache {
                path: path.display().to_string(),
                message,
            };
            let line = serde_json::to_string(&CacheLine {
                key: key.to_string(),
                strategy: caption.strategy,
                text: caption.text.clone(),
                provenance: caption.provenance.clone(),
            })
            .expect("cache line serializes");
            let mut writer = writer.lock().unwrap();
            if writer.is_none() {
                let file = OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(path)
                    .map_err(|e| err(e.to_string()))?;
                *writer = Some(file);
            }
            writer
                .as_mut()
                .unwrap()
                .write_all(format!("{line}\n").as_bytes())
                .map_err(|e| err(e.to_string()))?;
        }
        self.entries.write().unwrap().insert(key.to_string(), caption.clone());
        Ok(())
    }
}

/// Routes caption requests to the right backend and memoizes results.
pub struct CaptionPipeline<'a> {
    pub captioner: &'a dyn ModelBackend,
    /// Grounding-capable captioner; falls back to `captioner`.
    pub grounder: Option<&'a dyn ModelBackend>,
    /// Text-only model used for fusion.
    pub fuser: &'a dyn ModelBackend,
    pub cache: &'a CaptionCache,
    pub omit_image: bool,
}

impl CaptionPipeline<'_> {
    pub fn caption(&self, req: &CaptionRequest) -> Result<Caption, CaptionError> {
        req.validate()?;
        let key = req.cache_key();
        if let Some(hit) = self.cache.get(&key) {
            return Ok(hit);
        }
        let caption = match req.strategy {
            CaptionStrategy::Dense => {
                let gen = dense_gen(req.n_samples).without_image(self.omit_image);
                let raws = sample_raw_captions(&req.image_ref, req.n_samples, self.captioner, &gen)?;
                fuse_captions(&raws, self.fuser)?
            }
            CaptionStrategy::Grounded => grounded_caption(
                &req.image_ref,
                self.grounder.unwrap_or(self.captioner),
                &caption_gen().without_image(self.omit_image),
            )?,
            CaptionStrategy::QuestionGuided => question_guided_caption(
                &req.image_ref,
                req.question.as_deref().unwrap_or(""),
                self.captioner,
                &caption_gen().without_image(self.omit_image),
            )?,
        };
        self.cache.put(&key, &caption)?;
        Ok(caption)
    }
}
