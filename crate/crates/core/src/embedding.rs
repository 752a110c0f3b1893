//! Dense embedding vectors and cosine similarity.

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbeddingError {
    #[error("embedding must have at least one component")]
    Empty,
    #[error("embedding component {index} is not finite")]
    NonFinite { index: usize },
    #[error("embedding dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("malformed encoded embedding: {0}")]
    Encoding(String),
}

/// A finite, non-empty embedding. The dimension is `values.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    values: Vec<f32>,
    norm: f64,
}

impl Embedding {
    pub fn new(values: Vec<f32>) -> Result<Self, EmbeddingError> {
        if values.is_empty() {
            return Err(EmbeddingError::Empty);
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite { index });
        }
        let norm = values.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt();
        Ok(Self { values, norm })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    /// Cosine similarity clamped to `[-1, 1]`. A zero vector has similarity 0
    /// with everything.
    pub fn cosine(&self, other: &Embedding) -> Result<f64, EmbeddingError> {
        if self.dim() != other.dim() {
            return Err(EmbeddingError::DimensionMismatch { expected: self.dim(), actual: other.dim() });
        }
        let denom = self.norm * other.norm;
        if denom == 0.0 {
            return Ok(0.0);
        }
        let dot: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&x, &y)| f64::from(x) * f64::from(y))
            .sum();
        Ok((dot / denom).clamp(-1.0, 1.0))
    }

    /// Little-endian f32 bytes, base64 encoded. Bit-exact.
    pub fn to_base64(&self) -> String {
        use base64::Engine;
        let bytes: Vec<u8> = self.values.iter().flat_map(|v| v.to_le_bytes()).collect();
        base64::engine::general_purpose::STANDARD.encode(bytes)
    }

    pub fn from_base64(s: &str) -> Result<Self, EmbeddingError> {
        use base64::Engine;
        let bytes = base64::engine::general_purpose::STANDARD
            .decode(s)
            .map_err(|e| EmbeddingError::Encoding(e.to_string()))?;
        if bytes.len() % 4 != 0 {
            return Err(EmbeddingError::Encoding(format!("{} bytes is not a multiple of 4", bytes.len())));
        }
        let values = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Self::new(values)
    }
}

impl Serialize for Embedding {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_base64())
    }
}

impl<'de> Deserialize<'de> for Embedding {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Embedding::from_base64(&s).map_err(serde::de::Error::custom)
    }
}
