//! Embedding providers: a remote HTTP provider with record/replay support
//! and a deterministic feature-hashing fallback for offline runs.

use std::sync::Arc;

use crate::cassette::{digest_bytes, Cassette, Mode};
use crate::error::{Error, Result};
use crate::index::EmbeddingVector;
use crate::transport::HttpTransport;

/// Minimum hash-embedding dimensionality.
pub const MIN_HASH_DIM: usize = 8;

pub trait EmbeddingProvider: Send + Sync {
    fn name(&self) -> &str;
    fn dimension(&self) -> usize;
    /// Embeds a batch of texts, one raw vector per text.
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>>;
}

/// Embeds one text through a provider and L2-normalizes the result locally.
pub fn embed(text: &str, provider: &dyn EmbeddingProvider) -> Result<EmbeddingVector> {
    if text.is_empty() {
        return Err(Error::EmptyText);
    }
    let mut vectors = provider.embed_batch(&[text])?;
    if vectors.len() != 1 {
        return Err(Error::Provider {
            provider: provider.name().to_string(),
            message: format!("expected 1 vector, got {}", vectors.len()),
        });
    }
    let raw = vectors.pop().unwrap();
    if raw.len() != provider.dimension() {
        return Err(Error::Provider {
            provider: provider.name().to_string(),
            message: format!(
                "returned wrong dimension: expected {}, got {}",
                provider.dimension(),
                raw.len()
            ),
        });
    }
    EmbeddingVector::unit(raw)
}

// ---------------------------------------------------------------------------
// Deterministic feature-hashing provider
// ---------------------------------------------------------------------------

/// Seeded FNV-1a over the token bytes. Stable across platforms and releases.
fn fnv1a64(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Splits on whitespace and punctuation, lowercases.
fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

/// Bag-of-words feature hashing: each token lands on a seeded coordinate
/// with a seeded sign, accumulated and L2-normalized.
pub fn hash_embed(text: &str, dim: usize, seed: u64) -> Result<EmbeddingVector> {
    if dim < MIN_HASH_DIM {
        return Err(Error::DimensionTooSmall { dim });
    }
    let tokens = tokenize(text);
    if tokens.is_empty() {
        return Err(Error::EmptyTokenStream {
            text: text.to_string(),
        });
    }
    let mut acc = vec![0.0f64; dim];
    for token in &tokens {
        let h = fnv1a64(seed, token.as_bytes());
        let idx = ((h >> 1) % dim as u64) as usize;
        let sign = if h & 1 == 0 { 1.0 } else { -1.0 };
        acc[idx] += sign;
    }
    EmbeddingVector::unit(acc)
}

/// The offline deterministic provider.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
    seed: u64,
    name: String,
}

impl HashEmbedder {
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        if dim < MIN_HASH_DIM {
            return Err(Error::DimensionTooSmall { dim });
        }
        Ok(HashEmbedder {
            dim,
            seed,
            name: format!("hash-v1/{dim}/{seed}"),
        })
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn name(&self) -> &str {
        &self.name
    }

    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        texts
            .iter()
            .map(|t| Ok(hash_embed(t, self.dim, self.seed)?.as_slice().to_vec()))
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Remote HTTP provider
// ---------------------------------------------------------------------------

/// Configuration of the remote embedding endpoint.
///
/// The wire contract: request `{"model": ..., "texts": [...]}`, response
/// `{"vectors": [[...], ...]}`. The auth header value is read from
/// `secret_env` at call time.
#[derive(Debug, Clone)]
pub struct RemoteEmbedderConfig {
    pub url: String,
    pub model: Option<String>,
    pub dimension: usize,
    pub auth_header: Option<String>,
    pub secret_env: Option<String>,
}

pub struct RemoteEmbedder {
    cfg: RemoteEmbedderConfig,
    transport: Arc<dyn HttpTransport>,
    mode: Mode,
    cassette: Option<Arc<Cassette>>,
    name: String,
}

impl RemoteEmbedder {
    pub fn new(
        cfg: RemoteEmbedderConfig,
        transport: Arc<dyn HttpTransport>,
        mode: Mode,
        cassette: Option<Arc<Cassette>>,
    ) -> Result<Self> {
        if matches!(mode, Mode::Record | Mode::Replay) && cassette.is_none() {
            return Err(Error::Config(format!(
                "embedding provider in {mode} mode requires a cassette"
            )));
        }
        let name = format!(
            "remote/{}/{}",
            cfg.model.as_deref().unwrap_or("default"),
            cfg.dimension
        );
        Ok(RemoteEmbedder {
            cfg,
            transport,
            mode,
            cassette,
            name,
        })
    }

    fn headers(&self) -> Result<Vec<(String, String)>> {
        let mut headers = Vec::new();
        if let Some(header) = &self.cfg.auth_header {
            let var = self.cfg.secret_env.as_deref().unwrap_or_default();
            let value = std::env::var(var).map_err(|_| {
                Error::Config(format!("auth secret env var {var:?} is not set"))
            })?;
            headers.push((header.clone(), value));
        }
        Ok(headers)
    }

    fn call_live(&self, body: &str) -> Result<Vec<Vec<f64>>> {
        let response = self
            .transport
            .post_json(&self.cfg.url, &self.headers()?, body)?;
        let parsed: serde_json::Value =
            serde_json::from_str(&response).map_err(|e| Error::Provider {
                provider: self.name.clone(),
                message: format!("invalid JSON response: {e}"),
            })?;
        let vectors = parsed
            .get("vectors")
            .and_then(|v| v.as_array())
            .ok_or_else(|| Error::Provider {
                provider: self.name.clone(),
                message: "response missing `vectors` array".to_string(),
            })?;
        vectors
            .iter()
            .map(|v| {
                serde_json::from_value(v.clone()).map_err(|e| Error::Provider {
                    provider: self.name.clone(),
                    message: format!("bad vector in response: {e}"),
                })
            })
            .collect()
    }
}

impl EmbeddingProvider for RemoteEmbedder {
    fn name(&self) -> &str {
        &self.name
    }

    fn dimension(&self) -> usize {
        self.cfg.dimension
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        let body = serde_json::json!({
            "model": self.cfg.model,
            "texts": texts,
        })
        .to_string();
        let digest = digest_bytes(body.as_bytes());

        let vectors = match self.mode {
            Mode::Replay => {
                let cassette = self.cassette.as_ref().expect("checked in constructor");
                let value = cassette
                    .lookup("embedding", &digest)
                    .ok_or(Error::CassetteMiss { digest })?;
                serde_json::from_value(value).map_err(|e| Error::Provider {
                    provider: self.name.clone(),
                    message: format!("bad cassette entry: {e}"),
                })?
            }
            Mode::Live => self.call_live(&body)?,
            Mode::Record => {
                let vectors = self.call_live(&body)?;
                let cassette = self.cassette.as_ref().expect("checked in constructor");
                cassette.record("embedding", &digest, serde_json::json!(vectors))?;
                vectors
            }
        };

        if vectors.len() != texts.len() {
            return Err(Error::Provider {
                provider: self.name.clone(),
                message: format!("expected {} vectors, got {}", texts.len(), vectors.len()),
            });
        }
        for v in &vectors {
            if v.len() != self.cfg.dimension {
                return Err(Error::Provider {
                    provider: self.name.clone(),
                    message: format!(
                        "returned wrong dimension: expected {}, got {}",
                        self.cfg.dimension,
                        v.len()
                    ),
                });
            }
        }
        Ok(vectors)
    }
}
