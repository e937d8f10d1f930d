use std::hash::Hasher;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};

use super::{Embedder, LlmError};
use crate::text::word_tokens;

pub const FALLBACK_DIMENSION: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub provider_id: String,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>, provider_id: impl Into<String>) -> Self {
        Self { values, provider_id: provider_id.into() }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Cosine similarity, clamped to `[-1, 1]`.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, LlmError> {
    if a.len() != b.len() {
        return Err(LlmError::InvalidInput(format!(
            "embedding dimension mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(LlmError::InvalidInput("cosine of a zero vector is undefined".into()));
    }
    // Summing in index order keeps cosine(a, b) == cosine(b, a) bit for bit.
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Offline embedding provider: hashed bag-of-words term frequencies.
///
/// Each lowercase word token is hashed (FNV-1a, 64 bit) into one of
/// `dimension` buckets.
#[derive(Debug, Clone)]
pub struct HashedBowEmbedder {
    dimension: usize,
    provider_id: String,
}

impl HashedBowEmbedder {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        Self { dimension, provider_id: format!("hashed-bow-{dimension}") }
    }

    pub fn bucket(&self, token: &str) -> usize {
        let mut h = FnvHasher::default();
        h.write(token.as_bytes());
        (h.finish() % self.dimension as u64) as usize
    }
}

impl Default for HashedBowEmbedder {
    fn default() -> Self {
        Self::new(FALLBACK_DIMENSION)
    }
}

impl Embedder for HashedBowEmbedder {
    fn provider_id(&self) -> &str {
        &self.provider_id
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, LlmError> {
        if text.trim().is_empty() {
            return Err(LlmError::InvalidInput("cannot embed empty text".into()));
        }
        let mut values = vec![0.0; self.dimension];
        for token in word_tokens(text) {
            values[self.bucket(&token)] += 1.0;
        }
        Ok(EmbeddingVector::new(values, self.provider_id.clone()))
    }
}
