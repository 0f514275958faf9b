use std::thread;
use std::time::Duration;

use serde_json::{json, Value};

use super::{LlmError, LlmProvider, ProviderRequest};

pub const ENV_ENDPOINT: &str = "HONEYCOMB_LLM_ENDPOINT";
pub const ENV_MODEL: &str = "HONEYCOMB_LLM_MODEL";
pub const ENV_API_KEY: &str = "HONEYCOMB_LLM_API_KEY";

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    /// Full URL of a chat-completions endpoint.
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    pub max_retries: u32,
    pub timeout: Duration,
}

impl RemoteConfig {
    pub fn from_env() -> Result<Self, LlmError> {
        let var = |k: &str| std::env::var(k).ok().filter(|v| !v.is_empty());
        Ok(Self {
            endpoint: var(ENV_ENDPOINT).ok_or_else(|| LlmError::Config(format!("{ENV_ENDPOINT} is not set")))?,
            model: var(ENV_MODEL).ok_or_else(|| LlmError::Config(format!("{ENV_MODEL} is not set")))?,
            api_key: var(ENV_API_KEY),
            max_retries: 3,
            timeout: Duration::from_secs(120),
        })
    }
}

/// Chat-completions client. Transport errors, 429 and 5xx are retried with
/// exponential backoff up to `max_retries`.
pub struct RemoteProvider {
    config: RemoteConfig,
    agent: ureq::Agent,
}

enum Attempt {
    Done(String),
    Transient(String),
    Fatal(String),
}

impl RemoteProvider {
    pub fn new(config: RemoteConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { config, agent }
    }

    fn attempt(&self, request: &ProviderRequest) -> Attempt {
        let mut body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        });
        if !request.stop.is_empty() {
            body["stop"] = json!(request.stop);
        }
        let mut req = self.agent.post(&self.config.endpoint);
        if let Some(key) = &self.config.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = match req.send_json(body) {
            Ok(r) => r,
            Err(e) => return Attempt::Transient(e.to_string()),
        };
        let status = resp.status().as_u16();
        let text = match resp.body_mut().read_to_string() {
            Ok(t) => t,
            Err(e) => return Attempt::Transient(e.to_string()),
        };
        if status == 429 || status >= 500 {
            return Attempt::Transient(format!("HTTP {status}: {text}"));
        }
        if !(200..300).contains(&status) {
            return Attempt::Fatal(format!("HTTP {status}: {text}"));
        }
        let parsed: Value = match serde_json::from_str(&text) {
            Ok(v) => v,
            Err(e) => return Attempt::Fatal(format!("invalid JSON response: {e}")),
        };
        match parsed["choices"][0]["message"]["content"].as_str() {
            Some(content) => Attempt::Done(content.to_owned()),
            None => Attempt::Fatal(format!("response lacks choices[0].message.content: {text}")),
        }
    }
}

impl LlmProvider for RemoteProvider {
    fn complete(&self, request: &ProviderRequest) -> Result<String, LlmError> {
        let mut last = String::new();
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                thread::sleep(Duration::from_millis(500 << (attempt - 1).min(5)));
            }
            match self.attempt(request) {
                Attempt::Done(text) => return Ok(text),
                Attempt::Fatal(m) => return Err(LlmError::Remote(m)),
                Attempt::Transient(m) => {
                    tracing::warn!(attempt, error = %m, "transient provider failure");
                    last = m;
                }
            }
        }
        Err(LlmError::RetriesExhausted {
            attempts: self.config.max_retries + 1,
            last,
        })
    }

    fn name(&self) -> &str {
        "remote"
    }
}
