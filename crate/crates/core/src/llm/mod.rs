//! Language-model access. Every prompt the pipeline sends goes through
//! [`LlmGateway`], which owns the templates, the generation settings and the
//! call counter.

mod cassette;
mod remote;
mod scripted;
mod templates;

use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use thiserror::Error;

pub use cassette::{request_key, RecordingProvider, ReplayProvider};
pub use remote::{RemoteConfig, RemoteProvider, ENV_API_KEY, ENV_ENDPOINT, ENV_MODEL};
pub use scripted::{RulesBuilder, ScriptedProvider};
pub use templates::{TemplateSet, TEMPLATE_IDS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("provider request has an empty prompt")]
    EmptyPrompt,
    #[error("unknown template `{0}`")]
    UnknownTemplate(String),
    #[error("template `{template}` is missing slot `{slot}`")]
    MissingSlot { template: String, slot: String },
    #[error("scripted provider exhausted at prompt: {0}")]
    ScriptExhausted(String),
    #[error("scripted provider has no rule for prompt: {0}")]
    NoScriptMatch(String),
    #[error("replay: no cassette {key} in {dir}")]
    ReplayMiss { key: String, dir: String },
    #[error("remote provider: {0}")]
    Remote(String),
    #[error("remote provider failed after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: String },
    #[error("provider configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
}

/// One completion request.
#[derive(Debug, Clone, PartialEq)]
#[non_exhaustive]
pub struct ProviderRequest {
    pub prompt: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub stop: Vec<String>,
}

impl ProviderRequest {
    pub(crate) fn new(prompt: impl Into<String>) -> Self {
        let settings = GenerationSettings::default();
        Self {
            prompt: prompt.into(),
            temperature: settings.temperature,
            max_output_tokens: settings.max_output_tokens,
            stop: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.prompt.trim().is_empty() {
            Err(LlmError::EmptyPrompt)
        } else {
            Ok(())
        }
    }
}

pub trait LlmProvider: Send + Sync {
    fn complete(&self, request: &ProviderRequest) -> Result<String, LlmError>;
    fn name(&self) -> &str;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerationSettings {
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl Default for GenerationSettings {
    fn default() -> Self {
        Self {
            temperature: 0.0,
            max_output_tokens: 1024,
        }
    }
}

pub struct LlmGateway {
    provider: Arc<dyn LlmProvider>,
    templates: TemplateSet,
    settings: GenerationSettings,
    calls: AtomicUsize,
}

impl fmt::Debug for LlmGateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LlmGateway")
            .field("provider", &self.provider.name())
            .field("settings", &self.settings)
            .field("calls", &self.calls())
            .finish()
    }
}

impl LlmGateway {
    pub fn new(provider: Arc<dyn LlmProvider>) -> Self {
        Self {
            provider,
            templates: TemplateSet::default(),
            settings: GenerationSettings::default(),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn with_templates(mut self, templates: TemplateSet) -> Self {
        self.templates = templates;
        self
    }

    pub fn with_settings(mut self, settings: GenerationSettings) -> Self {
        self.settings = settings;
        self
    }

    pub fn templates(&self) -> &TemplateSet {
        &self.templates
    }

    /// Provider calls attempted through this gateway.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn render_prompt(&self, template_id: &str, slots: &[(&str, &str)]) -> Result<String, LlmError> {
        self.templates.render(template_id, slots)
    }

    /// Render a template and send it.
    pub fn complete_template(
        &self,
        template_id: &str,
        slots: &[(&str, &str)],
        stop: &[&str],
    ) -> Result<String, LlmError> {
        let prompt = self.render_prompt(template_id, slots)?;
        self.send(prompt, stop)
    }

    /// Send `prompt` verbatim.
    pub fn complete_prompt(&self, prompt: &str) -> Result<String, LlmError> {
        self.send(prompt.to_owned(), &[])
    }

    fn send(&self, prompt: String, stop: &[&str]) -> Result<String, LlmError> {
        let mut request = ProviderRequest::new(prompt);
        request.temperature = self.settings.temperature;
        request.max_output_tokens = self.settings.max_output_tokens;
        request.stop = stop.iter().map(|s| s.to_string()).collect();
        request.validate()?;
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.provider.complete(&request)
    }
}
