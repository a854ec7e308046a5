//! Text embeddings for exemplar retrieval.
//!
//! [`HashedBagOfWords`] is the deterministic local embedder: lowercase word
//! tokens hashed with FNV-1a into 256 buckets, term-frequency weighted and
//! L2-normalized. [`RemoteEmbedder`] calls an OpenAI-style `/embeddings`
//! endpoint.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Embedding(pub Vec<f64>);

impl Embedding {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self(self.0.iter().map(|v| v * factor).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EmbedError {
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("text has no word tokens")]
    NoTokens,
    #[error("remote embedder: {0}")]
    Remote(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum SimilarityError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("cosine similarity of a zero vector")]
    ZeroNorm,
}

pub fn cosine_sim(a: &Embedding, b: &Embedding) -> Result<f64, SimilarityError> {
    if a.dim() != b.dim() {
        return Err(SimilarityError::DimensionMismatch(a.dim(), b.dim()));
    }
    let sq = |v: &Embedding| v.0.iter().map(|x| x * x).sum::<f64>();
    let (na2, nb2) = (sq(a), sq(b));
    if na2 == 0.0 || nb2 == 0.0 {
        return Err(SimilarityError::ZeroNorm);
    }
    let dot: f64 = a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum();
    Ok((dot / (na2 * nb2).sqrt()).clamp(-1.0, 1.0))
}

pub trait Embedder: Send + Sync {
    /// Stable identifier; part of the embedding cache key.
    fn id(&self) -> String;

    fn embed(&self, text: &str) -> Result<Embedding, EmbedError>;

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Embedding>, EmbedError> {
        texts.iter().map(|t| self.embed(t)).collect()
    }
}

pub const HASHED_DIM: usize = 256;

#[derive(Debug, Clone, Copy, Default)]
pub struct HashedBagOfWords;

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

pub fn word_tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

impl Embedder for HashedBagOfWords {
    fn id(&self) -> String {
        format!("hashed-bow-{HASHED_DIM}")
    }

    fn embed(&self, text: &str) -> Result<Embedding, EmbedError> {
        if text.is_empty() {
            return Err(EmbedError::EmptyText);
        }
        let mut v = vec![0.0; HASHED_DIM];
        for token in word_tokens(text) {
            v[(fnv1a(token.as_bytes()) % HASHED_DIM as u64) as usize] += 1.0;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(EmbedError::NoTokens);
        }
        Ok(Embedding(v.into_iter().map(|x| x / norm).collect()))
    }
}

/// Client for a `POST {url}` endpoint taking `{"model", "input": [..]}` and
/// returning `{"data": [{"index", "embedding": [..]}]}`.
#[derive(Debug, Clone)]
pub struct RemoteEmbedder {
    pub url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
}

impl RemoteEmbedder {
    pub fn request_body(&self, texts: &[String]) -> Value {
        json!({ "model": self.model, "input": texts })
    }

    pub fn parse_response(body: &Value, expected: usize) -> Result<Vec<Embedding>, EmbedError> {
        let data = body
            .get("data")
            .and_then(Value::as_array)
            .ok_or_else(|| EmbedError::Remote("response has no data array".into()))?;
        let mut out: Vec<(usize, Embedding)> = Vec::with_capacity(data.len());
        for (pos, item) in data.iter().enumerate() {
            let index = item.get("index").and_then(Value::as_u64).map_or(pos, |i| i as usize);
            let values = item
                .get("embedding")
                .and_then(Value::as_array)
                .ok_or_else(|| EmbedError::Remote(format!("item {pos} has no embedding")))?
                .iter()
                .map(|v| v.as_f64().filter(|x| x.is_finite()))
                .collect::<Option<Vec<f64>>>()
                .ok_or_else(|| EmbedError::Remote(format!("item {pos} has non-numeric entries")))?;
            out.push((index, Embedding(values)));
        }
        if out.len() != expected {
            return Err(EmbedError::Remote(format!("expected {expected} embeddings, got {}", out.len())));
        }
        out.sort_by_key(|(i, _)| *i);
        Ok(out.into_iter().map(|(_, e)| e).collect())
    }
}

impl Embedder for RemoteEmbedder {
    fn id(&self) -> String {
        format!("remote-{}", self.model)
    }

    fn embed(&self, text: &str) -> Result<Embedding, EmbedError> {
        if text.is_empty() {
            return Err(EmbedError::EmptyText);
        }
        Ok(self.embed_batch(&[text.to_string()])?.remove(0))
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Embedding>, EmbedError> {
        if texts.iter().any(|t| t.is_empty()) {
            return Err(EmbedError::EmptyText);
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(self.timeout)
            .build()
            .map_err(|e| EmbedError::Remote(e.to_string()))?;
        let mut req = client.post(&self.url).json(&self.request_body(texts));
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| EmbedError::Remote(e.to_string()))?;
        let status = resp.status();
        let body: Value = resp.json().map_err(|e| EmbedError::Remote(e.to_string()))?;
        if !status.is_success() {
            return Err(EmbedError::Remote(format!("HTTP {status}: {body}")));
        }
        Self::parse_response(&body, texts.len())
    }
}
