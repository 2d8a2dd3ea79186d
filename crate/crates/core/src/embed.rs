//! Sentence embedding providers.

use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EmbedError {
    #[error("embedding unavailable: {0}")]
    EmbeddingUnavailable(String),
}

/// Maps text to a fixed-size vector. Implementations must be callable from
/// several threads at once.
pub trait EmbeddingProvider: Send + Sync {
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError>;
}

/// Deterministic bag-of-tokens embedder: every lowercase token contributes a
/// pseudo-random vector derived from its SHA-256, so texts sharing words are
/// closer than unrelated ones.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dimension: usize,
}

impl HashEmbedder {
    pub const DEFAULT_DIMENSION: usize = 64;

    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        Self { dimension }
    }

    fn token_vector(&self, token: &str, out: &mut [f64]) {
        let mut block = 0u32;
        let mut filled = 0;
        while filled < out.len() {
            let mut hasher = Sha256::new();
            hasher.update(token.as_bytes());
            hasher.update(block.to_le_bytes());
            let digest = hasher.finalize();
            for pair in digest.chunks_exact(2) {
                if filled == out.len() {
                    break;
                }
                let raw = u16::from_le_bytes([pair[0], pair[1]]);
                out[filled] += raw as f64 / 32767.5 - 1.0;
                filled += 1;
            }
            block += 1;
        }
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self::new(Self::DEFAULT_DIMENSION)
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        let lowered = text.to_lowercase();
        let tokens: Vec<&str> = lowered
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .collect();
        if tokens.is_empty() {
            return Err(EmbedError::EmbeddingUnavailable("text is empty".into()));
        }
        let mut v = vec![0.0; self.dimension];
        for token in tokens {
            self.token_vector(token, &mut v);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(EmbedError::EmbeddingUnavailable("degenerate embedding".into()));
        }
        v.iter_mut().for_each(|x| *x /= norm);
        Ok(v)
    }
}
