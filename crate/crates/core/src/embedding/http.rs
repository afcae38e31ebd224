//! External encoder over HTTP JSON.
//!
//! Request: `{"texts": [...], "kind": "document" | "sentence"}`.
//! Response: `{"vectors": [[...], ...], "dimension": N}`.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{EmbedError, EmbeddingKind, EmbeddingProvider, Vector};

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [&'a str],
    kind: EmbeddingKind,
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
    dimension: usize,
}

pub struct HttpProvider {
    url: String,
    name: String,
    dim: usize,
    kind: EmbeddingKind,
    agent: ureq::Agent,
}

impl HttpProvider {
    pub fn new(url: impl Into<String>, dim: usize, kind: EmbeddingKind) -> Result<Self, EmbedError> {
        if dim == 0 {
            return Err(EmbedError::InvalidDimension(dim));
        }
        let url = url.into();
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(60)))
            .build()
            .into();
        Ok(Self {
            name: format!("http:{url}"),
            url,
            dim,
            kind,
            agent,
        })
    }
}

impl std::fmt::Debug for HttpProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpProvider")
            .field("url", &self.url)
            .field("dim", &self.dim)
            .field("kind", &self.kind)
            .finish()
    }
}

impl EmbeddingProvider for HttpProvider {
    fn name(&self) -> &str {
        &self.name
    }

    fn dimension(&self) -> usize {
        self.dim
    }

    fn kind(&self) -> EmbeddingKind {
        self.kind
    }

    fn embed_texts(&self, texts: &[&str]) -> Result<Vec<Vector>, EmbedError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let body = EmbedRequest {
            texts,
            kind: self.kind,
        };
        let mut resp = self.agent.post(&self.url).send_json(&body).map_err(|e| match e {
            ureq::Error::StatusCode(code) if (400..500).contains(&code) => {
                EmbedError::Contract(format!("{} returned status {code}", self.url))
            }
            other => EmbedError::Transport(format!("{}: {other}", self.url)),
        })?;
        let parsed: EmbedResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| EmbedError::Contract(format!("bad response body: {e}")))?;
        if parsed.dimension != self.dim {
            return Err(EmbedError::Contract(format!(
                "service dimension {} != configured {}",
                parsed.dimension, self.dim
            )));
        }
        if parsed.vectors.len() != texts.len() {
            return Err(EmbedError::Contract(format!(
                "{} vectors for {} texts",
                parsed.vectors.len(),
                texts.len()
            )));
        }
        parsed
            .vectors
            .iter()
            .map(|v| {
                if v.len() != self.dim {
                    return Err(EmbedError::Contract(format!(
                        "vector of length {} (expected {})",
                        v.len(),
                        self.dim
                    )));
                }
                Vector::normalized(v)
            })
            .collect()
    }
}
