//! Record/replay of provider calls. Each call is stored as
//! `<dir>/<sha256 of the canonical request>.json`.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{LlmError, LlmProvider, ProviderRequest};

#[derive(Debug, Serialize, Deserialize)]
struct Cassette {
    request: CanonicalRequest,
    response: String,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
struct CanonicalRequest {
    prompt: String,
    temperature: f64,
    max_output_tokens: u32,
    stop: Vec<String>,
}

impl From<&ProviderRequest> for CanonicalRequest {
    fn from(r: &ProviderRequest) -> Self {
        Self {
            prompt: r.prompt.clone(),
            temperature: r.temperature,
            max_output_tokens: r.max_output_tokens,
            stop: r.stop.clone(),
        }
    }
}

pub fn request_key(request: &ProviderRequest) -> String {
    let canonical = serde_json::to_string(&CanonicalRequest::from(request)).expect("request serializes");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

fn cassette_path(dir: &Path, request: &ProviderRequest) -> PathBuf {
    dir.join(format!("{}.json", request_key(request)))
}

/// Serves recorded responses; an unrecorded request fails loudly.
#[derive(Debug, Clone)]
pub struct ReplayProvider {
    dir: PathBuf,
}

impl ReplayProvider {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }
}

impl LlmProvider for ReplayProvider {
    fn complete(&self, request: &ProviderRequest) -> Result<String, LlmError> {
        let path = cassette_path(&self.dir, request);
        let text = fs::read_to_string(&path).map_err(|_| LlmError::ReplayMiss {
            key: request_key(request),
            dir: self.dir.display().to_string(),
        })?;
        let cassette: Cassette =
            serde_json::from_str(&text).map_err(|e| LlmError::Io(format!("{}: {e}", path.display())))?;
        Ok(cassette.response)
    }

    fn name(&self) -> &str {
        "replay"
    }
}

/// Passes calls through to `inner` and writes each exchange to `dir`.
pub struct RecordingProvider {
    inner: Arc<dyn LlmProvider>,
    dir: PathBuf,
}

impl RecordingProvider {
    pub fn new(inner: Arc<dyn LlmProvider>, dir: impl Into<PathBuf>) -> Self {
        Self { inner, dir: dir.into() }
    }
}

impl LlmProvider for RecordingProvider {
    fn complete(&self, request: &ProviderRequest) -> Result<String, LlmError> {
        let response = self.inner.complete(request)?;
        fs::create_dir_all(&self.dir).map_err(|e| LlmError::Io(e.to_string()))?;
        let cassette = Cassette {
            request: request.into(),
            response: response.clone(),
        };
        let path = cassette_path(&self.dir, request);
        fs::write(&path, serde_json::to_string_pretty(&cassette).expect("cassette serializes"))
            .map_err(|e| LlmError::Io(format!("{}: {e}", path.display())))?;
        Ok(response)
    }

    fn name(&self) -> &str {
        "recording"
    }
}
