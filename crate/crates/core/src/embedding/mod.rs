//! Document and sentence vectors behind a provider boundary.
//!
//! Every provider returns unit-normalized vectors, so cosine similarity is a
//! plain dot product everywhere downstream.

mod cache;
mod fallback;
mod http;
pub mod tfidf;

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Document, Sentence};

pub use cache::{content_hash, CachingProvider, ContentHash, VectorCache, VectorCacheError};
pub use fallback::{fallback_encode, FallbackEncoder, FALLBACK_MIN_DIM, FALLBACK_SEED};
pub use http::HttpProvider;

/// Tolerance on the unit-norm contract.
pub const UNIT_NORM_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbedError {
    #[error("provider {provider} produces {actual} vectors, {expected} requested")]
    WrongKind {
        provider: String,
        expected: EmbeddingKind,
        actual: EmbeddingKind,
    },
    #[error("text is empty after trimming")]
    EmptyText,
    #[error("invalid dimension {0}")]
    InvalidDimension(usize),
    #[error("provider unavailable: {0}")]
    Transport(String),
    #[error("provider contract violated: {0}")]
    Contract(String),
}

impl EmbedError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, EmbedError::Transport(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingKind {
    Document,
    Sentence,
}

impl EmbeddingKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EmbeddingKind::Document => "document",
            EmbeddingKind::Sentence => "sentence",
        }
    }
}

impl fmt::Display for EmbeddingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Dense unit-length embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vector(Vec<f32>);

impl Vector {
    /// L2-normalizes `raw`. Fails on non-finite components or zero norm.
    pub fn normalized(raw: &[f64]) -> Result<Self, EmbedError> {
        if raw.iter().any(|x| !x.is_finite()) {
            return Err(EmbedError::Contract("non-finite component".into()));
        }
        let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(EmbedError::Contract("zero vector".into()));
        }
        Ok(Self(raw.iter().map(|x| (x / norm) as f32).collect()))
    }

    pub fn normalized_f32(raw: &[f32]) -> Result<Self, EmbedError> {
        let wide: Vec<f64> = raw.iter().map(|&x| x as f64).collect();
        Self::normalized(&wide)
    }

    /// Wraps components as-is; callers guarantee they are already unit length.
    pub fn from_unit(components: Vec<f32>) -> Self {
        Self(components)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f32> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt()
    }

    pub fn is_unit(&self) -> bool {
        (self.norm() - 1.0).abs() <= UNIT_NORM_TOL
    }

    pub fn dot(&self, other: &Vector) -> f32 {
        dot(&self.0, &other.0)
    }
}

/// Inner product used by every scoring path, so equal inputs give
/// bit-identical scores whether they come from the graph or a full scan.
#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0f32; 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let i = c * 8;
        for l in 0..8 {
            acc[l] += a[i + l] * b[i + l];
        }
    }
    let mut tail = 0f32;
    for i in chunks * 8..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[4]) + (acc[1] + acc[5]) + (acc[2] + acc[6]) + (acc[3] + acc[7]) + tail
}

pub trait EmbeddingProvider: Send + Sync {
    fn name(&self) -> &str;
    fn dimension(&self) -> usize;
    fn kind(&self) -> EmbeddingKind;
    /// Embeds a batch; output order matches input order.
    fn embed_texts(&self, texts: &[&str]) -> Result<Vec<Vector>, EmbedError>;
}

impl<P: EmbeddingProvider + ?Sized> EmbeddingProvider for Arc<P> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn kind(&self) -> EmbeddingKind {
        (**self).kind()
    }
    fn embed_texts(&self, texts: &[&str]) -> Result<Vec<Vector>, EmbedError> {
        (**self).embed_texts(texts)
    }
}

fn check_kind(provider: &dyn EmbeddingProvider, expected: EmbeddingKind) -> Result<(), EmbedError> {
    if provider.kind() != expected {
        return Err(EmbedError::WrongKind {
            provider: provider.name().to_string(),
            expected,
            actual: provider.kind(),
        });
    }
    Ok(())
}

fn one(provider: &dyn EmbeddingProvider, text: &str) -> Result<Vector, EmbedError> {
    if text.trim().is_empty() {
        return Err(EmbedError::EmptyText);
    }
    provider
        .embed_texts(&[text])?
        .pop()
        .ok_or_else(|| EmbedError::Contract("empty response".into()))
}

/// Embeds `title [SEP] abstract` with a document-level provider.
pub fn embed_document(doc: &Document, provider: &dyn EmbeddingProvider) -> Result<Vector, EmbedError> {
    check_kind(provider, EmbeddingKind::Document)?;
    one(provider, &doc.encoder_text())
}

pub fn embed_sentence(
    sentence: &Sentence,
    provider: &dyn EmbeddingProvider,
) -> Result<Vector, EmbedError> {
    check_kind(provider, EmbeddingKind::Sentence)?;
    one(provider, &sentence.text)
}

/// Batch-embeds `texts`, fanning batches out in parallel. Output order
/// matches input order.
pub fn embed_batched(
    provider: &dyn EmbeddingProvider,
    texts: &[&str],
    batch_size: usize,
) -> Result<Vec<Vector>, EmbedError> {
    if texts.iter().any(|t| t.trim().is_empty()) {
        return Err(EmbedError::EmptyText);
    }
    let batches: Vec<Vec<Vector>> = texts
        .par_chunks(batch_size.max(1))
        .map(|chunk| {
            let out = provider.embed_texts(chunk)?;
            if out.len() != chunk.len() {
                return Err(EmbedError::Contract(format!(
                    "{} vectors for {} texts",
                    out.len(),
                    chunk.len()
                )));
            }
            Ok(out)
        })
        .collect::<Result<_, _>>()?;
    Ok(batches.into_iter().flatten().collect())
}

pub fn embed_sentences(
    sentences: &[&Sentence],
    provider: &dyn EmbeddingProvider,
    batch_size: usize,
) -> Result<Vec<Vector>, EmbedError> {
    check_kind(provider, EmbeddingKind::Sentence)?;
    let texts: Vec<&str> = sentences.iter().map(|s| s.text.as_str()).collect();
    embed_batched(provider, &texts, batch_size)
}

/// Parses a provider spec: `fallback` or `http:<url>`.
pub fn provider_from_spec(
    spec: &str,
    kind: EmbeddingKind,
    dim: usize,
) -> Result<Arc<dyn EmbeddingProvider>, EmbedError> {
    if spec == "fallback" {
        return Ok(Arc::new(FallbackEncoder::new(dim, kind)?));
    }
    if let Some(url) = spec.strip_prefix("http:") {
        // accept both http:<url> and a bare http://... spec
        let url = if url.starts_with("//") {
            spec.to_string()
        } else {
            url.to_string()
        };
        return Ok(Arc::new(HttpProvider::new(url, dim, kind)?));
    }
    if spec.starts_with("https:") {
        return Ok(Arc::new(HttpProvider::new(spec.to_string(), dim, kind)?));
    }
    Err(EmbedError::Contract(format!("unknown provider spec {spec:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_matches_naive_sum() {
        let a: Vec<f32> = (0..37).map(|i| (i as f32).sin()).collect();
        let b: Vec<f32> = (0..37).map(|i| (i as f32 * 0.7).cos()).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| (*x as f64) * (*y as f64)).sum();
        assert!((dot(&a, &b) as f64 - naive).abs() < 1e-5);
    }

    #[test]
    fn normalized_rejects_bad_input() {
        assert!(Vector::normalized(&[0.0, 0.0]).is_err());
        assert!(Vector::normalized(&[f64::NAN, 1.0]).is_err());
        let v = Vector::normalized(&[3.0, 4.0]).unwrap();
        assert_eq!(v.as_slice(), &[0.6, 0.8]);
        assert!(v.is_unit());
    }

    #[test]
    fn provider_spec_parsing() {
        let p = provider_from_spec("fallback", EmbeddingKind::Sentence, 64).unwrap();
        assert_eq!(p.dimension(), 64);
        let p = provider_from_spec("http:http://localhost:1/embed", EmbeddingKind::Document, 8)
            .unwrap();
        assert_eq!(p.name(), "http:http://localhost:1/embed");
        assert!(provider_from_spec("bogus", EmbeddingKind::Document, 8).is_err());
    }

    #[test]
    fn kind_mismatch_is_rejected() {
        let enc = FallbackEncoder::new(32, EmbeddingKind::Sentence).unwrap();
        let doc = Document::new("p", "T", "Some abstract.", vec![]).unwrap();
        assert!(matches!(
            embed_document(&doc, &enc),
            Err(EmbedError::WrongKind { .. })
        ));
    }
}
