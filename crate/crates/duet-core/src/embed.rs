//! Text embedding behind a pluggable trait. The offline backend hashes
//! tokens into a fixed-dimension bag-of-words vector (FNV-1a mod dim,
//! count-accumulated, L2-normalized), which is deterministic across runs
//! and platforms; alignment diagnostics are therefore fully verifiable
//! without a network. Remote embedding backends implement the same trait
//! in the companion crate.

use alloc::string::String;
use alloc::vec::Vec;

use crate::fnv::fnv1a;
use crate::math;
use crate::text::tokenize;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EmbedError {
    #[error("embedding dimension mismatch within a batch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("embedding backend failure (retryable={retryable}): {message}")]
    Backend { retryable: bool, message: String },
    #[error("dimension must be >= 1")]
    BadDimension,
}

pub trait Embedder {
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbedError>;
    fn dim(&self) -> usize;
}

/// Deterministic hashed bag-of-words embedder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashedBowEmbedder {
    dim: usize,
}

impl Default for HashedBowEmbedder {
    fn default() -> Self {
        HashedBowEmbedder { dim: 256 }
    }
}

impl HashedBowEmbedder {
    pub fn new(dim: usize) -> Result<Self, EmbedError> {
        if dim == 0 {
            return Err(EmbedError::BadDimension);
        }
        Ok(HashedBowEmbedder { dim })
    }

    fn embed_one(&self, text: &str) -> Vec<f64> {
        let mut v = alloc::vec![0.0f64; self.dim];
        for token in tokenize(text) {
            let idx = (fnv1a(token.as_bytes()) % self.dim as u64) as usize;
            v[idx] += 1.0;
        }
        let norm = math::sqrt(v.iter().map(|x| x * x).sum::<f64>());
        if norm > 0.0 {
            for x in &mut v {
                *x /= norm;
            }
        }
        v
    }
}

impl Embedder for HashedBowEmbedder {
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbedError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }

    fn dim(&self) -> usize {
        self.dim
    }
}
