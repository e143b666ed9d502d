//! Embedding providers: the trait, a deterministic test embedder, and an
//! HTTP client for external embedding services.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{EmbeddingVector, RetrievalError};

/// Environment variable naming the embedding service endpoint.
pub const EMBED_URL_ENV: &str = "DRAGFORGE_EMBED_URL";

/// A text embedder. Implementations must be deterministic per
/// `provider_id`: the same text always maps to the same vector, and every
/// vector has exactly `dim` components.
pub trait EmbeddingProvider {
    /// Stable identifier recorded in indexes; selection refuses to compare
    /// vectors across different provider ids.
    fn provider_id(&self) -> &str;

    fn dim(&self) -> usize;

    /// Embeds `texts` in order; the result has one vector per input text.
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, RetrievalError>;
}

/// Deterministic embedder for tests and offline runs: character n-grams
/// (n = 1..=3) are hashed into a signed bucket vector which is then
/// L2-normalized. No model, no I/O, reproducible everywhere.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
    seed: u64,
    provider_id: String,
}

impl HashEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self {
            dim,
            seed,
            provider_id: format!("ngram-hash-v1:d{dim}:s{seed}"),
        }
    }

    fn embed_one(&self, text: &str) -> EmbeddingVector {
        let chars: Vec<char> = text.chars().collect();
        let mut acc = vec![0.0f64; self.dim];
        let mut buf = String::new();
        for n in 1..=3usize {
            if chars.len() < n {
                break;
            }
            for window in chars.windows(n) {
                buf.clear();
                buf.extend(window.iter());
                let h = fnv1a64(buf.as_bytes(), self.seed ^ n as u64);
                let bucket = (h % self.dim as u64) as usize;
                let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
                acc[bucket] += sign;
            }
        }
        let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            // Empty or fully cancelled text still needs a valid direction.
            acc[0] = 1.0;
            let values = acc.iter().map(|&v| v as f32).collect();
            return EmbeddingVector::new(values).expect("unit basis vector is valid");
        }
        let values = acc.iter().map(|&v| (v / norm) as f32).collect();
        EmbeddingVector::new(values).expect("normalized non-zero vector is valid")
    }
}

fn fnv1a64(bytes: &[u8], seed: u64) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET ^ seed.wrapping_mul(PRIME);
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(PRIME);
    }
    h
}

impl EmbeddingProvider for HashEmbedder {
    fn provider_id(&self) -> &str {
        &self.provider_id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, RetrievalError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

/// Settings for [`HttpEmbedder`].
#[derive(Debug, Clone)]
pub struct HttpEmbedderConfig {
    pub endpoint: String,
    pub provider_id: String,
    pub dim: usize,
    /// Texts per POST request.
    pub batch_size: usize,
    /// Retries after the first attempt on transient failures.
    pub max_retries: u32,
    pub initial_backoff: Duration,
    pub request_timeout: Duration,
}

impl HttpEmbedderConfig {
    pub fn new(endpoint: impl Into<String>, provider_id: impl Into<String>, dim: usize) -> Self {
        Self {
            endpoint: endpoint.into(),
            provider_id: provider_id.into(),
            dim,
            batch_size: 32,
            max_retries: 3,
            initial_backoff: Duration::from_millis(250),
            request_timeout: Duration::from_secs(30),
        }
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f32>>,
}

/// Client for an embedding service speaking `POST {"texts": [...]}` →
/// `{"vectors": [[...]]}`. Requests are sent in batches; transient failures
/// (transport errors, HTTP 429 and 5xx) are retried with exponential
/// backoff, anything else fails immediately.
pub struct HttpEmbedder {
    config: HttpEmbedderConfig,
    client: reqwest::blocking::Client,
}

impl HttpEmbedder {
    pub fn new(config: HttpEmbedderConfig) -> Result<Self, RetrievalError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.request_timeout)
            .build()
            .map_err(|e| RetrievalError::Provider { msg: e.to_string() })?;
        Ok(Self { config, client })
    }

    fn post_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, RetrievalError> {
        let mut backoff = self.config.initial_backoff;
        let mut attempt = 0u32;
        loop {
            match self.try_post(texts) {
                Ok(vectors) => return Ok(vectors),
                Err(Transient(msg)) if attempt < self.config.max_retries => {
                    attempt += 1;
                    std::thread::sleep(backoff);
                    backoff = backoff.saturating_mul(2);
                    let _ = msg;
                }
                Err(Transient(msg)) => {
                    return Err(RetrievalError::Provider {
                        msg: format!("{msg} (after {} retries)", self.config.max_retries),
                    })
                }
                Err(Fatal(err)) => return Err(err),
            }
        }
    }

    fn try_post(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, PostError> {
        let response = self
            .client
            .post(&self.config.endpoint)
            .json(&EmbedRequest { texts })
            .send()
            .map_err(|e| Transient(e.to_string()))?;
        let status = response.status();
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(Transient(format!(
                "{}: HTTP {status}",
                self.config.endpoint
            )));
        }
        if !status.is_success() {
            return Err(Fatal(RetrievalError::Provider {
                msg: format!("{}: HTTP {status}", self.config.endpoint),
            }));
        }
        let body: EmbedResponse = response.json().map_err(|e| {
            Fatal(RetrievalError::Provider {
                msg: format!("bad response: {e}"),
            })
        })?;
        if body.vectors.len() != texts.len() {
            return Err(Fatal(RetrievalError::Provider {
                msg: format!(
                    "service returned {} vectors for {} texts",
                    body.vectors.len(),
                    texts.len()
                ),
            }));
        }
        body.vectors
            .into_iter()
            .map(|values| {
                if values.len() != self.config.dim {
                    return Err(Fatal(RetrievalError::DimMismatch {
                        expected: self.config.dim,
                        got: values.len(),
                    }));
                }
                EmbeddingVector::new(values).map_err(Fatal)
            })
            .collect()
    }
}

use PostError::{Fatal, Transient};

enum PostError {
    /// Worth retrying: transport failure, 429, or 5xx.
    Transient(String),
    Fatal(RetrievalError),
}

impl EmbeddingProvider for HttpEmbedder {
    fn provider_id(&self) -> &str {
        &self.config.provider_id
    }

    fn dim(&self) -> usize {
        self.config.dim
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, RetrievalError> {
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.config.batch_size.max(1)) {
            out.extend(self.post_batch(chunk)?);
        }
        Ok(out)
    }
}
