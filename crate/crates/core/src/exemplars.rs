//! Few-shot exemplar pools and similarity-capped nearest-neighbour
//! selection.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::{EmbedError, EmbeddingProvider};
use crate::exec::{self, ExecMode};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SelectError {
    #[error("vector dimensions differ ({0} vs {1})")]
    DimMismatch(usize, usize),
    #[error("cosine similarity is undefined for an all-zero vector")]
    ZeroVector,
    #[error("similarity cap must lie in (0, 1], got {0}")]
    InvalidCap(f64),
}

#[derive(Debug, Error)]
pub enum PoolError {
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Malformed { path: String, line: usize, message: String },
    #[error("pool mixes embedding sizes ({expected} then {found} at line {line})")]
    Dimension { expected: usize, found: usize, line: usize },
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exemplar {
    pub question: String,
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale: Option<String>,
    /// Empty until the pool has been embedded.
    #[serde(default)]
    pub embedding: Vec<f64>,
}

impl Exemplar {
    pub fn new(question: impl Into<String>, answer: impl Into<String>) -> Self {
        Self {
            question: question.into(),
            answer: answer.into(),
            caption: None,
            rationale: None,
            embedding: Vec::new(),
        }
    }

    pub fn with_embedding(mut self, embedding: Vec<f64>) -> Self {
        self.embedding = embedding;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub k: usize,
    pub similarity_cap: f64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            k: 5,
            similarity_cap: 0.6,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<(), SelectError> {
        if !(self.similarity_cap > 0.0 && self.similarity_cap <= 1.0) {
            return Err(SelectError::InvalidCap(self.similarity_cap));
        }
        Ok(())
    }
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64, SelectError> {
    if a.len() != b.len() {
        return Err(SelectError::DimMismatch(a.len(), b.len()));
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(SelectError::ZeroVector);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scored {
    pub index: usize,
    pub similarity: f64,
}

/// True when `a` should be ranked ahead of `b`.
fn ranks_before(a: &Scored, b: &Scored) -> bool {
    a.similarity > b.similarity || (a.similarity == b.similarity && a.index < b.index)
}

/// Bounded insertion buffer holding the best `k` candidates seen so far.
struct TopK {
    k: usize,
    best: Vec<Scored>,
}

impl TopK {
    fn new(k: usize) -> Self {
        Self {
            k,
            best: Vec::with_capacity(k + 1),
        }
    }

    fn offer(&mut self, cand: Scored) {
        if self.k == 0 {
            return;
        }
        if self.best.len() == self.k && !ranks_before(&cand, self.best.last().unwrap()) {
            return;
        }
        let pos = self
            .best
            .iter()
            .position(|s| ranks_before(&cand, s))
            .unwrap_or(self.best.len());
        self.best.insert(pos, cand);
        self.best.truncate(self.k);
    }
}

/// Ranks pool items by cosine similarity to `query`, keeping only those
/// strictly below the cap. Ties go to the lower pool index. Pool items
/// without an embedding, or with an all-zero one, are never selected.
pub fn select_exemplars(
    query: &[f64],
    pool: &[Exemplar],
    cfg: &SelectionConfig,
) -> Result<Vec<Scored>, SelectError> {
    select_exemplars_in(ExecMode::default(), query, pool, cfg)
}

const SELECT_CHUNK: usize = 2048;

pub fn select_exemplars_in(
    mode: ExecMode,
    query: &[f64],
    pool: &[Exemplar],
    cfg: &SelectionConfig,
) -> Result<Vec<Scored>, SelectError> {
    cfg.validate()?;
    if query.iter().all(|x| *x == 0.0) {
        return Err(SelectError::ZeroVector);
    }
    if cfg.k == 0 {
        return Ok(Vec::new());
    }
    let partials = exec::map_chunks(mode, pool, SELECT_CHUNK, |start, chunk| {
        let mut top = TopK::new(cfg.k);
        for (offset, ex) in chunk.iter().enumerate() {
            if ex.embedding.is_empty() {
                continue;
            }
            let similarity = match cosine_similarity(query, &ex.embedding) {
                Ok(s) => s,
                Err(SelectError::ZeroVector) => continue,
                Err(e) => return Err(e),
            };
            if similarity < cfg.similarity_cap {
                top.offer(Scored {
                    index: start + offset,
                    similarity,
                });
            }
        }
        Ok(top.best)
    });
    let mut top = TopK::new(cfg.k);
    for part in partials {
        for cand in part? {
            top.offer(cand);
        }
    }
    Ok(top.best)
}

pub fn load_pool(path: &Path) -> Result<Vec<Exemplar>, PoolError> {
    let display = path.display().to_string();
    let file = File::open(path).map_err(|source| PoolError::Io {
        path: display.clone(),
        source,
    })?;
    let mut pool = Vec::new();
    let mut dim: Option<usize> = None;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| PoolError::Io {
            path: display.clone(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let ex: Exemplar = serde_json::from_str(&line).map_err(|e| PoolError::Malformed {
            path: display.clone(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if ex.question.trim().is_empty() || ex.answer.trim().is_empty() {
            return Err(PoolError::Malformed {
                path: display.clone(),
                line: i + 1,
                message: "question and answer must be non-empty".into(),
            });
        }
        if !ex.embedding.is_empty() {
            match dim {
                None => dim = Some(ex.embedding.len()),
                Some(d) if d != ex.embedding.len() => {
                    return Err(PoolError::Dimension {
                        expected: d,
                        found: ex.embedding.len(),
                        line: i + 1,
                    })
                }
                _ => {}
            }
        }
        pool.push(ex);
    }
    Ok(pool)
}

/// Writes the pool as JSONL through a temp file renamed into place.
pub fn save_pool(path: &Path, pool: &[Exemplar]) -> Result<(), PoolError> {
    let display = path.display().to_string();
    let io = |source| PoolError::Io {
        path: display.clone(),
        source,
    };
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    for ex in pool {
        let line = serde_json::to_string(ex).expect("exemplar serializes");
        writeln!(tmp, "{line}").map_err(io)?;
    }
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

/// Fills in missing question embeddings. Returns how many were computed.
pub fn embed_missing(pool: &mut [Exemplar], provider: &dyn EmbeddingProvider) -> Result<usize, PoolError> {
    let mut filled = 0;
    for ex in pool.iter_mut().filter(|ex| ex.embedding.is_empty()) {
        ex.embedding = provider.embed(&ex.question)?;
        filled += 1;
    }
    Ok(filled)
}

/// Loads a pool, embeds any lines lacking an embedding and rewrites the
/// file when something changed.
pub fn load_or_embed_pool(path: &Path, provider: &dyn EmbeddingProvider) -> Result<Vec<Exemplar>, PoolError> {
    let mut pool = load_pool(path)?;
    if embed_missing(&mut pool, provider)? > 0 {
        save_pool(path, &pool)?;
    }
    Ok(pool)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pool_with_sims(sims: &[f64]) -> (Vec<f64>, Vec<Exemplar>) {
        // Unit vectors at the requested cosine to the query [1, 0].
        let query = vec![1.0, 0.0];
        let pool = sims
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let y = (1.0 - s * s).max(0.0).sqrt();
                Exemplar::new(format!("q{i}?"), "a").with_embedding(vec![*s, y])
            })
            .collect();
        (query, pool)
    }

    #[test]
    fn cosine_examples() {
        let v = [0.3, -2.0, 5.0];
        assert!((cosine_similarity(&v, &v).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let s = cosine_similarity(&[1.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!((s - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-8);
        assert_eq!(cosine_similarity(&[1.0], &[1.0, 2.0]), Err(SelectError::DimMismatch(1, 2)));
        assert_eq!(cosine_similarity(&[0.0, 0.0], &[1.0, 2.0]), Err(SelectError::ZeroVector));
    }

    #[test]
    fn cap_and_k() {
        let (q, pool) = pool_with_sims(&[0.9, 0.55, 0.5, 0.4]);
        let cfg = SelectionConfig { k: 2, similarity_cap: 0.6 };
        let picked = select_exemplars(&q, &pool, &cfg).unwrap();
        assert_eq!(picked.iter().map(|s| s.index).collect::<Vec<_>>(), vec![1, 2]);

        let none = select_exemplars(&q, &pool, &SelectionConfig { k: 0, similarity_cap: 0.6 }).unwrap();
        assert!(none.is_empty());
    }

    #[test]
    fn self_duplicate_excluded() {
        let (q, mut pool) = pool_with_sims(&[0.3, 0.2]);
        pool.push(Exemplar::new("dup", "a").with_embedding(q.clone()));
        let picked = select_exemplars(&q, &pool, &SelectionConfig::default()).unwrap();
        assert!(picked.iter().all(|s| s.index != 2));
        assert_eq!(picked.len(), 2);
    }

    #[test]
    fn boundary_is_excluded_and_ties_keep_pool_order() {
        let q = vec![1.0, 0.0];
        let pool = vec![
            Exemplar::new("a", "a").with_embedding(vec![0.6, 0.8]),
            Exemplar::new("b", "a").with_embedding(vec![0.0, 1.0]),
            Exemplar::new("c", "a").with_embedding(vec![0.0, 2.0]),
        ];
        let picked = select_exemplars(&q, &pool, &SelectionConfig::default()).unwrap();
        // 0.6 * 1.0 / 1.0 lands exactly on the cap.
        assert_eq!(picked.iter().map(|s| s.index).collect::<Vec<_>>(), vec![1, 2]);
    }

    #[test]
    fn invalid_cap() {
        let (q, pool) = pool_with_sims(&[0.1]);
        let cfg = SelectionConfig { k: 1, similarity_cap: 0.0 };
        assert_eq!(select_exemplars(&q, &pool, &cfg), Err(SelectError::InvalidCap(0.0)));
    }

    #[test]
    fn unembedded_items_are_skipped() {
        let (q, mut pool) = pool_with_sims(&[0.1]);
        pool.insert(0, Exemplar::new("raw", "a"));
        let picked = select_exemplars(&q, &pool, &SelectionConfig::default()).unwrap();
        assert_eq!(picked.iter().map(|s| s.index).collect::<Vec<_>>(), vec![1]);
    }
}
