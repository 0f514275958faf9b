use std::hash::Hasher;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use fnv::FnvHasher;
use serde_json::{json, Value};

use super::tokenize;

/// Maps text to a fixed-dimension vector. Implementations must return the
/// same vector for the same text and keep the dimension constant.
pub trait EmbeddingProvider: Send + Sync {
    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbeddingError>;
    fn name(&self) -> &str;
}

#[derive(Debug, thiserror::Error)]
#[error("embedding provider `{provider}`: {message}")]
pub struct EmbeddingError {
    pub provider: String,
    pub message: String,
}

/// Feature-hashing embedder: each token adds a signed unit to a hashed
/// bucket, then the vector is L2-normalized.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
}

impl HashEmbedder {
    pub const DEFAULT_DIM: usize = 256;

    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self::new(Self::DEFAULT_DIM)
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbeddingError> {
        let mut v = vec![0.0; self.dim];
        for token in tokenize(text) {
            let mut h = FnvHasher::default();
            h.write(token.as_bytes());
            let h = h.finish();
            let bucket = (h % self.dim as u64) as usize;
            let sign = if (h >> 63) & 1 == 0 { 1.0 } else { -1.0 };
            v[bucket] += sign;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        Ok(v)
    }

    fn name(&self) -> &str {
        "hash"
    }
}

/// Client for an embeddings endpoint that accepts `{"model", "input"}` and
/// answers `{"data": [{"embedding": [...]}]}`.
pub struct RemoteEmbedder {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    agent: ureq::Agent,
    dim: AtomicUsize,
}

impl RemoteEmbedder {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>, api_key: Option<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(60)))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key,
            agent,
            dim: AtomicUsize::new(0),
        }
    }

    fn err(&self, message: impl Into<String>) -> EmbeddingError {
        EmbeddingError {
            provider: "remote".into(),
            message: message.into(),
        }
    }
}

impl EmbeddingProvider for RemoteEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbeddingError> {
        let mut req = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(json!({ "model": self.model, "input": text }))
            .map_err(|e| self.err(e.to_string()))?;
        let status = resp.status();
        let body: Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| self.err(format!("HTTP {status}: {e}")))?;
        if !status.is_success() {
            return Err(self.err(format!("HTTP {status}: {body}")));
        }
        let vector: Vec<f64> = body["data"][0]["embedding"]
            .as_array()
            .ok_or_else(|| self.err("response lacks data[0].embedding"))?
            .iter()
            .map(|x| x.as_f64().ok_or_else(|| self.err("non-numeric embedding component")))
            .collect::<Result<_, _>>()?;
        let expected = self.dim.load(Ordering::Relaxed);
        if expected == 0 {
            self.dim.store(vector.len(), Ordering::Relaxed);
        } else if expected != vector.len() {
            return Err(self.err(format!(
                "dimension changed from {expected} to {}",
                vector.len()
            )));
        }
        Ok(vector)
    }

    fn name(&self) -> &str {
        "remote"
    }
}

/// Cosine similarity; zero when either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}
