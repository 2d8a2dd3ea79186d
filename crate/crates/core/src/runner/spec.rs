//! Experiment configuration, read from TOML with `${VAR}` interpolation.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::RunError;
use crate::backend::http::{HttpBackend, HttpConfig};
use crate::backend::replay::{RecordMode, RecordReplayBackend, ReplayStore};
use crate::backend::ModelBackend;
use crate::captions::CaptionStrategy;
use crate::cot::ConsistencyConfig;
use crate::datasets::{DatasetFormat, Framing};
use crate::embed::{EmbeddingProvider, HashEmbedder};
use crate::exemplars::SelectionConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    Standard,
    Caption,
    Cot,
    CotIterative,
    CotContext,
    CotConsistency,
}

impl Setting {
    pub fn is_cot(self) -> bool {
        !matches!(self, Setting::Standard | Setting::Caption)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerMode {
    /// Multiple choice whenever the record has options.
    #[default]
    Auto,
    Open,
    MultipleChoice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub path: PathBuf,
    pub format: DatasetFormat,
    #[serde(default)]
    pub answer_mode: AnswerMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewShotSpec {
    pub pool: PathBuf,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_cap")]
    pub cap: f64,
}

fn default_k() -> usize {
    SelectionConfig::default().k
}

fn default_cap() -> f64 {
    SelectionConfig::default().similarity_cap
}

impl FewShotSpec {
    pub fn selection(&self) -> SelectionConfig {
        SelectionConfig {
            k: self.k,
            similarity_cap: self.cap,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendSpec {
    Replay { store: PathBuf },
    Record { store: PathBuf, http: HttpConfig },
    Passthrough { store: PathBuf, http: HttpConfig },
    Http(HttpConfig),
}

impl BackendSpec {
    pub fn store(&self) -> Option<&Path> {
        match self {
            BackendSpec::Replay { store } | BackendSpec::Record { store, .. } | BackendSpec::Passthrough { store, .. } => {
                Some(store)
            }
            BackendSpec::Http(_) => None,
        }
    }

    pub fn build(&self) -> Result<Arc<dyn ModelBackend>, RunError> {
        let open = |store: &Path| {
            ReplayStore::open(store)
                .map(Arc::new)
                .map_err(|e| RunError::Config(format!("replay store {}: {e}", store.display())))
        };
        let http = |cfg: &HttpConfig| -> Result<Box<dyn ModelBackend>, RunError> {
            Ok(Box::new(HttpBackend::new(cfg.clone()).map_err(|e| RunError::Config(e.to_string()))?))
        };
        let wrapped = |mode, store: &Path, inner| -> Result<Arc<dyn ModelBackend>, RunError> {
            Ok(Arc::new(
                RecordReplayBackend::new(mode, open(store)?, Some(inner)).map_err(|e| RunError::Config(e.to_string()))?,
            ))
        };
        match self {
            BackendSpec::Replay { store } => Ok(Arc::new(RecordReplayBackend::replay(open(store)?))),
            BackendSpec::Record { store, http: cfg } => wrapped(RecordMode::Record, store, http(cfg)?),
            BackendSpec::Passthrough { store, http: cfg } => wrapped(RecordMode::Passthrough, store, http(cfg)?),
            BackendSpec::Http(cfg) => Ok(Arc::from(http(cfg)?)),
        }
    }

    fn resolve(&mut self, base: &Path) {
        match self {
            BackendSpec::Replay { store } | BackendSpec::Record { store, .. } | BackendSpec::Passthrough { store, .. } => {
                *store = join(base, store)
            }
            BackendSpec::Http(_) => {}
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmbedderSpec {
    Hash {
        #[serde(default = "default_dimension")]
        dimension: usize,
    },
    Http(HttpConfig),
}

fn default_dimension() -> usize {
    HashEmbedder::DEFAULT_DIMENSION
}

impl Default for EmbedderSpec {
    fn default() -> Self {
        EmbedderSpec::Hash {
            dimension: default_dimension(),
        }
    }
}

impl EmbedderSpec {
    pub fn build(&self) -> Result<Arc<dyn EmbeddingProvider>, RunError> {
        match self {
            EmbedderSpec::Hash { dimension } if *dimension > 0 => Ok(Arc::new(HashEmbedder::new(*dimension))),
            EmbedderSpec::Hash { .. } => Err(RunError::Config("embedding dimension must be positive".into())),
            EmbedderSpec::Http(cfg) => Ok(Arc::new(
                HttpBackend::new(cfg.clone()).map_err(|e| RunError::Config(e.to_string()))?,
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct WinogroundSpec {
    #[serde(default)]
    pub framing: Framing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub dataset: DatasetSpec,
    #[serde(default = "default_template")]
    pub template: String,
    #[serde(default = "default_cot_template")]
    pub cot_template: String,
    pub setting: Setting,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption_strategy: Option<CaptionStrategy>,
    #[serde(default = "default_dense_samples")]
    pub dense_samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption_cache: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub few_shot: Option<FewShotSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_instruction: Option<String>,
    #[serde(default)]
    pub use_llm_parse: bool,
    #[serde(default)]
    pub omit_image: bool,
    pub backend: BackendSpec,
    /// Text-only model for parsing, fusion and conversion; defaults to
    /// `backend`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_backend: Option<BackendSpec>,
    #[serde(default)]
    pub embedder: EmbedderSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub consistency: Option<ConsistencyConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_limit: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_workers")]
    pub max_in_flight: usize,
    #[serde(default)]
    pub winoground: WinogroundSpec,
}

fn default_template() -> String {
    "qa".into()
}

fn default_cot_template() -> String {
    "think-qa".into()
}

fn default_dense_samples() -> usize {
    crate::captions::DEFAULT_DENSE_SAMPLES
}

fn default_workers() -> usize {
    4
}

fn join(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Replaces `${NAME}` with the environment variable's value. `$$` is a
/// literal `$`.
pub fn interpolate_env(text: &str, lookup: impl Fn(&str) -> Option<String>) -> Result<String, RunError> {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(pos) = rest.find('$') {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos + 1..];
        if let Some(after) = tail.strip_prefix('$') {
            out.push('$');
            rest = after;
        } else if let Some(body) = tail.strip_prefix('{') {
            let end = body
                .find('}')
                .ok_or_else(|| RunError::Config("unterminated ${ in config".into()))?;
            let name = &body[..end];
            let value = lookup(name).ok_or_else(|| RunError::Config(format!("environment variable {name} is not set")))?;
            out.push_str(&value);
            rest = &body[end + 1..];
        } else {
            out.push('$');
            rest = tail;
        }
    }
    out.push_str(rest);
    Ok(out)
}

impl ExperimentSpec {
    pub fn from_toml_str(text: &str) -> Result<Self, RunError> {
        let text = interpolate_env(text, |name| std::env::var(name).ok())?;
        let spec: ExperimentSpec = toml::from_str(&text).map_err(|e| RunError::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    /// Loads a spec; relative paths are taken from the file's directory.
    pub fn from_toml_file(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
        let mut spec = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        spec.resolve_paths(base);
        Ok(spec)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        self.dataset.path = join(base, &self.dataset.path);
        if let Some(fs) = &mut self.few_shot {
            fs.pool = join(base, &fs.pool);
        }
        if let Some(cache) = &mut self.caption_cache {
            *cache = join(base, cache);
        }
        self.backend.resolve(base);
        if let Some(tb) = &mut self.text_backend {
            tb.resolve(base);
        }
    }

    pub fn validate(&self) -> Result<(), RunError> {
        let bad = |m: &str| Err(RunError::Config(m.to_string()));
        if self.caption_strategy.is_some() != (self.setting == Setting::Caption) {
            return bad("caption_strategy must be set exactly when setting = \"caption\"");
        }
        if self.consistency.is_some() != (self.setting == Setting::CotConsistency) {
            return bad("consistency must be set exactly when setting = \"cot_consistency\"");
        }
        if let Some(c) = &self.consistency {
            c.validate().map_err(|e| RunError::Config(e.to_string()))?;
        }
        if let Some(fs) = &self.few_shot {
            if !matches!(self.setting, Setting::Standard | Setting::Caption | Setting::Cot) {
                return bad("few_shot applies to the standard, caption and cot settings only");
            }
            if fs.k > crate::templates::MAX_EXEMPLARS {
                return bad("few_shot.k must be at most 5");
            }
            fs.selection().validate().map_err(|e| RunError::Config(e.to_string()))?;
        }
        if self.caption_strategy == Some(CaptionStrategy::Dense) && self.dense_samples < 2 {
            return bad("dense_samples must be at least 2");
        }
        if self.workers == 0 || self.max_in_flight == 0 {
            return bad("workers and max_in_flight must be >= 1");
        }
        let registry = crate::templates::builtin_registry();
        registry.get(&self.template).map_err(|e| RunError::Config(e.to_string()))?;
        if self.setting.is_cot() {
            let cot = registry.get(&self.cot_template).map_err(|e| RunError::Config(e.to_string()))?;
            if cot.family != crate::templates::TemplateFamily::Cot {
                return bad("cot_template must name a chain-of-thought template");
            }
        }
        Ok(())
    }

    pub fn selection(&self) -> Option<SelectionConfig> {
        self.few_shot.as_ref().map(FewShotSpec::selection)
    }
}
