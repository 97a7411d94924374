use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::text::tokenize;

pub const HASH_SEED: u64 = 0x5eed_be11_ef00_0001;
pub const MIN_EMBED_DIM: usize = 8;

/// Dropped before hashing. A text made only of these embeds to the zero vector.
pub const STOPWORDS: &[&str] = &[
    "a", "about", "after", "again", "all", "am", "an", "and", "any", "are", "as", "at", "be",
    "been", "before", "being", "but", "by", "can", "could", "did", "do", "does", "for", "from",
    "had", "has", "have", "he", "her", "here", "him", "his", "how", "i", "if", "in", "into", "is",
    "it", "its", "just", "me", "my", "no", "not", "of", "on", "or", "our", "she", "so", "than",
    "that", "the", "their", "them", "then", "there", "these", "they", "this", "those", "to", "too",
    "up", "very", "was", "we", "were", "what", "when", "where", "which", "who", "why", "will",
    "with", "would", "you", "your",
];

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("embedding dimension {0} is below the minimum of {MIN_EMBED_DIM}")]
    Dimension(usize),
    #[error("remote embedder: {0}")]
    Remote(String),
}

/// A unit-length vector, or the explicit zero vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    components: Vec<f64>,
    zero: bool,
}

impl EmbeddingVector {
    /// L2-normalizes `raw`. An all-zero input becomes the zero vector.
    pub fn from_raw(raw: Vec<f64>) -> Self {
        let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Self::zero(raw.len());
        }
        Self {
            components: raw.into_iter().map(|x| x / norm).collect(),
            zero: false,
        }
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            components: vec![0.0; dim],
            zero: true,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.zero
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[f64] {
        &self.components
    }

    pub fn norm(&self) -> f64 {
        self.components.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Cosine similarity in [-1, 1]; 0 if either side is the zero vector or
    /// the dimensions differ.
    pub fn cosine(&self, other: &Self) -> f64 {
        if self.zero || other.zero || self.dim() != other.dim() {
            return 0.0;
        }
        let dot: f64 = self
            .components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| a * b)
            .sum();
        dot.clamp(-1.0, 1.0)
    }
}

pub trait Embedder: Send + Sync {
    fn embed_dim(&self) -> usize;
    /// Whether equal texts map to equal vectors across processes.
    fn is_deterministic(&self) -> bool;
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError>;
}

/// 64-bit FNV-1a, seeded through the offset basis.
fn fnv1a(bytes: &[u8], seed: u64) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Feature-hashing bag-of-tokens embedding. Stable across runs and platforms.
pub fn deterministic_embed(text: &str, dim: usize) -> Result<EmbeddingVector, EmbedError> {
    if dim < MIN_EMBED_DIM {
        return Err(EmbedError::Dimension(dim));
    }
    let mut raw = vec![0.0; dim];
    for token in tokenize(text) {
        if STOPWORDS.binary_search(&token.as_str()).is_ok() {
            continue;
        }
        let h = splitmix64(fnv1a(token.as_bytes(), HASH_SEED));
        let bucket = (h % dim as u64) as usize;
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        raw[bucket] += sign;
    }
    Ok(EmbeddingVector::from_raw(raw))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashEmbedder {
    dim: usize,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Result<Self, EmbedError> {
        if dim < MIN_EMBED_DIM {
            return Err(EmbedError::Dimension(dim));
        }
        Ok(Self { dim })
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self { dim: 256 }
    }
}

impl Embedder for HashEmbedder {
    fn embed_dim(&self) -> usize {
        self.dim
    }

    fn is_deterministic(&self) -> bool {
        true
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        deterministic_embed(text, self.dim)
    }
}

/// Embedding service client: POSTs `{"input": [text]}` and expects
/// `{"vectors": [[...]]}`.
pub struct RemoteEmbedder {
    url: String,
    dim: usize,
    retries: u32,
    client: reqwest::blocking::Client,
}

impl RemoteEmbedder {
    pub fn new(url: impl Into<String>, dim: usize, timeout_ms: u64, retries: u32) -> Result<Self, EmbedError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(timeout_ms))
            .build()
            .map_err(|e| EmbedError::Remote(e.to_string()))?;
        Ok(Self {
            url: url.into(),
            dim,
            retries,
            client,
        })
    }

    pub fn parse_response(body: &str, dim: usize) -> Result<Vec<EmbeddingVector>, EmbedError> {
        #[derive(Deserialize)]
        struct Response {
            vectors: Vec<Vec<f64>>,
        }
        let response: Response =
            serde_json::from_str(body).map_err(|e| EmbedError::Remote(e.to_string()))?;
        response
            .vectors
            .into_iter()
            .map(|v| {
                if v.len() == dim {
                    Ok(EmbeddingVector::from_raw(v))
                } else {
                    Err(EmbedError::Remote(format!("expected {dim} components, got {}", v.len())))
                }
            })
            .collect()
    }

    fn post_once(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let response = self
            .client
            .post(&self.url)
            .json(&json!({ "input": [text] }))
            .send()
            .map_err(|e| EmbedError::Remote(e.to_string()))?;
        if !response.status().is_success() {
            return Err(EmbedError::Remote(format!("HTTP {}", response.status())));
        }
        let body = response.text().map_err(|e| EmbedError::Remote(e.to_string()))?;
        Self::parse_response(&body, self.dim)?
            .pop()
            .ok_or_else(|| EmbedError::Remote("empty `vectors`".into()))
    }
}

impl Embedder for RemoteEmbedder {
    fn embed_dim(&self) -> usize {
        self.dim
    }

    fn is_deterministic(&self) -> bool {
        false
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let mut last = None;
        for _ in 0..=self.retries {
            match self.post_once(text) {
                Ok(v) => return Ok(v),
                Err(e) => last = Some(e),
            }
        }
        Err(last.expect("at least one attempt"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn embed(text: &str) -> EmbeddingVector {
        deterministic_embed(text, 256).unwrap()
    }

    #[test]
    fn stopwords_sorted_for_binary_search() {
        assert!(STOPWORDS.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn deterministic_and_order_free() {
        assert_eq!(embed("cat"), embed("cat"));
        assert_eq!(embed("cat sat"), embed("sat cat"));
        assert!((embed("cat sat").norm() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn stable_across_platforms() {
        // pinned: a change here breaks every stored digest that involves embeddings
        assert_eq!(fnv1a(b"", 0), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a(b"a", 0), 0xaf63_dc4c_8601_ec8c);
        assert_eq!(splitmix64(0), 0xe220_a839_7b1d_cdaf);
    }

    #[test]
    fn zero_vector_for_stopwords() {
        let z = embed("the and of");
        assert!(z.is_zero());
        assert_eq!(z.cosine(&embed("cat")), 0.0);
        assert_eq!(z.cosine(&z), 0.0);
        assert!(embed("").is_zero());
    }

    #[test]
    fn related_text_closer_than_unrelated() {
        let base = embed("api x timeout");
        assert!(base.cosine(&embed("api x timeout again")) > base.cosine(&embed("weather sunny paris")));
    }

    #[test]
    fn dimension_floor() {
        assert!(deterministic_embed("x", 7).is_err());
        assert!(HashEmbedder::new(4).is_err());
    }

    #[test]
    fn remote_response_shape() {
        let v = RemoteEmbedder::parse_response(r#"{"vectors": [[3, 4, 0, 0, 0, 0, 0, 0]]}"#, 8).unwrap();
        assert_eq!(v[0].components()[..2], [0.6, 0.8]);
        assert!(RemoteEmbedder::parse_response(r#"{"vectors": [[1, 2]]}"#, 8).is_err());
        assert!(RemoteEmbedder::parse_response(r#"{"data": []}"#, 8).is_err());
    }
}
