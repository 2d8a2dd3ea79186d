//! Record/replay backend keyed by a canonical request digest.
//!
//! The store is an append-only JSONL file of `{digest, request, response}`.
//! When a digest appears more than once the last line wins.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{BackendError, BackendRequest, BackendResponse, ModelBackend};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}:{line}: malformed replay entry: {message}")]
    Malformed { path: String, line: usize, message: String },
    #[error("mode `{0}` needs a live backend to wrap")]
    MissingInner(RecordMode),
    #[error("unknown record mode `{0}` (expected record, replay or passthrough)")]
    UnknownMode(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordMode {
    Record,
    Replay,
    Passthrough,
}

impl std::fmt::Display for RecordMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RecordMode::Record => "record",
            RecordMode::Replay => "replay",
            RecordMode::Passthrough => "passthrough",
        })
    }
}

impl FromStr for RecordMode {
    type Err = StoreError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "record" => Ok(RecordMode::Record),
            "replay" => Ok(RecordMode::Replay),
            "passthrough" => Ok(RecordMode::Passthrough),
            other => Err(StoreError::UnknownMode(other.to_string())),
        }
    }
}

/// Writes `value` as JSON with object keys sorted at every level.
pub fn canonical_json(value: &Value) -> String {
    let mut out = String::new();
    write_canonical(value, &mut out);
    out
}

fn write_canonical(value: &Value, out: &mut String) {
    match value {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, key) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&Value::String(key.clone()).to_string());
                out.push(':');
                write_canonical(&map[key], out);
            }
            out.push('}');
        }
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(item, out);
            }
            out.push(']');
        }
        scalar => out.push_str(&scalar.to_string()),
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Stable hash of (prompt, image_ref, generation config).
pub fn request_digest(req: &BackendRequest) -> String {
    let key = serde_json::json!({
        "prompt": req.prompt,
        "image_ref": req.image_ref,
        "gen": serde_json::to_value(&req.gen).expect("config serializes"),
    });
    sha256_hex(canonical_json(&key).as_bytes())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StoreLine {
    digest: String,
    request: BackendRequest,
    response: BackendResponse,
}

pub struct ReplayStore {
    path: PathBuf,
    entries: RwLock<HashMap<String, BackendResponse>>,
    writer: Mutex<Option<File>>,
}

impl ReplayStore {
    /// Opens (or lazily creates) the store at `path`.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        let display = path.display().to_string();
        let mut entries = HashMap::new();
        if path.exists() {
            let file = File::open(&path).map_err(|source| StoreError::Io {
                path: display.clone(),
                source,
            })?;
            for (i, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|source| StoreError::Io {
                    path: display.clone(),
                    source,
                })?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: StoreLine = serde_json::from_str(&line).map_err(|e| StoreError::Malformed {
                    path: display.clone(),
                    line: i + 1,
                    message: e.to_string(),
                })?;
                entries.insert(entry.digest, entry.response);
            }
        }
        Ok(Self {
            path,
            entries: RwLock::new(entries),
            writer: Mutex::new(None),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn lookup(&self, req: &BackendRequest) -> Result<BackendResponse, BackendError> {
        let digest = request_digest(req);
        self.entries
            .read()
            .unwrap()
            .get(&digest)
            .cloned()
            .ok_or(BackendError::ReplayMiss { digest })
    }

    /// Appends one entry as a single line write.
    pub fn insert(&self, req: &BackendRequest, resp: &BackendResponse) -> Result<(), StoreError> {
        let digest = request_digest(req);
        let line = serde_json::to_string(&StoreLine {
            digest: digest.clone(),
            request: req.clone(),
            response: resp.clone(),
        })
        .expect("replay entry serializes");
        let io = |source| StoreError::Io {
            path: self.path.display().to_string(),
            source,
        };
        {
            let mut writer = self.writer.lock().unwrap();
            if writer.is_none() {
                if let Some(dir) = self.path.parent().filter(|p| !p.as_os_str().is_empty()) {
                    std::fs::create_dir_all(dir).map_err(io)?;
                }
                let file = OpenOptions::new().create(true).append(true).open(&self.path).map_err(io)?;
                *writer = Some(file);
            }
            let file = writer.as_mut().unwrap();
            file.write_all(format!("{line}\n").as_bytes()).map_err(io)?;
            file.flush().map_err(io)?;
        }
        self.entries.write().unwrap().insert(digest, resp.clone());
        Ok(())
    }

    /// Order-independent digest of the store contents.
    pub fn content_digest(&self) -> String {
        let entries = self.entries.read().unwrap();
        let mut keys: Vec<&String> = entries.keys().collect();
        keys.sort();
        let mut hasher = Sha256::new();
        for key in keys {
            hasher.update(key.as_bytes());
            hasher.update(serde_json::to_string(&entries[key].texts).unwrap().as_bytes());
        }
        hex::encode(hasher.finalize())
    }
}

pub struct RecordReplayBackend {
    mode: RecordMode,
    store: std::sync::Arc<ReplayStore>,
    inner: Option<Box<dyn ModelBackend>>,
    id: String,
}

impl RecordReplayBackend {
    pub fn replay(store: std::sync::Arc<ReplayStore>) -> Self {
        let id = format!("replay:{}", store.path().display());
        Self {
            mode: RecordMode::Replay,
            store,
            inner: None,
            id,
        }
    }

    pub fn new(
        mode: RecordMode,
        store: std::sync::Arc<ReplayStore>,
        inner: Option<Box<dyn ModelBackend>>,
    ) -> Result<Self, StoreError> {
        if mode != RecordMode::Replay && inner.is_none() {
            return Err(StoreError::MissingInner(mode));
        }
        let id = match (&inner, mode) {
            (Some(b), RecordMode::Passthrough) => b.id().to_string(),
            (Some(b), RecordMode::Record) => format!("record:{}", b.id()),
            _ => format!("replay:{}", store.path().display()),
        };
        Ok(Self { mode, store, inner, id })
    }

    pub fn mode(&self) -> RecordMode {
        self.mode
    }

    pub fn store(&self) -> &ReplayStore {
        &self.store
    }
}

impl ModelBackend for RecordReplayBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, req: &BackendRequest) -> Result<BackendResponse, BackendError> {
        req.validate()?;
        match self.mode {
            RecordMode::Replay => self.store.lookup(req),
            RecordMode::Passthrough => self.inner.as_ref().expect("checked in new").complete(req),
            RecordMode::Record => {
                let resp = self.inner.as_ref().expect("checked in new").complete(req)?;
                self.store
                    .insert(req, &resp)
                    .map_err(|e| BackendError::other(format!("cannot record response: {e}")))?;
                Ok(resp)
            }
        }
    }
}
