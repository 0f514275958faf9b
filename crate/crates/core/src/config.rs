//! Run configuration: a TOML file whose relative paths resolve against the
//! file's own directory. Command-line and environment overrides are applied
//! on top by the caller.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;
use thiserror::Error;

use crate::agent::{Ablation, AgentConfig};
use crate::eval::GradeConfig;
use crate::retriever::RetrieverConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    File { path: PathBuf, message: String },
    #[error("invalid provider `{0}` (expected remote, scripted:<path> or replay:<dir>)")]
    Provider(String),
    #[error("invalid value for {field}: {message}")]
    Value { field: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProviderSpec {
    Remote,
    Scripted(PathBuf),
    Replay(PathBuf),
}

impl FromStr for ProviderSpec {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        let s = s.trim();
        if s == "remote" {
            return Ok(ProviderSpec::Remote);
        }
        match s.split_once(':') {
            Some(("scripted", p)) if !p.is_empty() => Ok(ProviderSpec::Scripted(p.into())),
            Some(("replay", p)) if !p.is_empty() => Ok(ProviderSpec::Replay(p.into())),
            _ => Err(ConfigError::Provider(s.to_owned())),
        }
    }
}

impl fmt::Display for ProviderSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProviderSpec::Remote => f.write_str("remote"),
            ProviderSpec::Scripted(p) => write!(f, "scripted:{}", p.display()),
            ProviderSpec::Replay(p) => write!(f, "replay:{}", p.display()),
        }
    }
}

impl ProviderSpec {
    fn resolve(self, base: &Path) -> Self {
        match self {
            ProviderSpec::Scripted(p) => ProviderSpec::Scripted(base.join(p)),
            ProviderSpec::Replay(p) => ProviderSpec::Replay(base.join(p)),
            other => other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    /// Serve recorded fixtures; a missing fixture is an error.
    #[default]
    Replay,
    /// Call the live APIs.
    Live,
    /// Call the live APIs and record fixtures.
    Record,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComputeMode {
    /// Recorded request/response pairs.
    Fixture,
    /// Spawn the compute worker process.
    Worker,
    /// No compute backend; compute tools return errors.
    #[default]
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedderKind {
    #[default]
    Hash,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedderConfig {
    pub kind: EmbedderKind,
    pub dim: usize,
    pub endpoint: Option<String>,
    pub model: Option<String>,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self {
            kind: EmbedderKind::Hash,
            dim: crate::retriever::HashEmbedder::DEFAULT_DIM,
            endpoint: None,
            model: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    pub provider: Option<String>,
    pub templates_dir: Option<PathBuf>,
    /// Record every provider exchange into this directory.
    pub record_dir: Option<PathBuf>,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            provider: None,
            templates_dir: None,
            record_dir: None,
            temperature: 0.0,
            max_output_tokens: 1024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToolsConfig {
    pub search: SearchMode,
    pub fixtures_dir: Option<PathBuf>,
    pub compute: ComputeMode,
    pub compute_fixtures: Option<PathBuf>,
    pub worker_command: Vec<String>,
    /// Registry file of domain atomic tools.
    pub registry: Option<PathBuf>,
    pub default_timeout_secs: u64,
}

impl Default for ToolsConfig {
    fn default() -> Self {
        Self {
            search: SearchMode::Replay,
            fixtures_dir: None,
            compute: ComputeMode::None,
            compute_fixtures: None,
            worker_command: Vec::new(),
            registry: None,
            default_timeout_secs: crate::tool_hub::DEFAULT_TIMEOUT_SECS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub kb: Option<PathBuf>,
    pub ablation: Option<String>,
    pub seed: u64,
    pub retriever: RetrieverConfig,
    pub embedder: EmbedderConfig,
    pub agent: AgentConfig,
    pub llm: LlmConfig,
    pub tools: ToolsConfig,
    pub grading: GradeConfig,
}

impl Config {
    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut cfg: Config = toml::from_str(text).map_err(|e| ConfigError::File {
            path: base.to_owned(),
            message: e.to_string(),
        })?;
        cfg.resolve_paths(base)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError::File {
            path: path.to_owned(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).map_err(|e| match e {
            ConfigError::File { message, .. } => ConfigError::File {
                path: path.to_owned(),
                message,
            },
            other => other,
        })
    }

    fn resolve_paths(&mut self, base: &Path) -> Result<(), ConfigError> {
        let join = |p: &mut Option<PathBuf>| {
            if let Some(x) = p.as_mut() {
                *x = base.join(&*x);
            }
        };
        join(&mut self.kb);
        join(&mut self.llm.templates_dir);
        join(&mut self.llm.record_dir);
        join(&mut self.tools.fixtures_dir);
        join(&mut self.tools.compute_fixtures);
        join(&mut self.tools.registry);
        if let Some(p) = &self.llm.provider {
            let spec: ProviderSpec = p.parse()?;
            self.llm.provider = Some(spec.resolve(base).to_string());
        }
        Ok(())
    }

    pub fn provider(&self) -> Result<ProviderSpec, ConfigError> {
        match &self.llm.provider {
            Some(p) => p.parse(),
            None => Ok(ProviderSpec::Remote),
        }
    }

    pub fn ablation(&self) -> Result<Ablation, ConfigError> {
        match &self.ablation {
            Some(a) => a.parse().map_err(|message| ConfigError::Value {
                field: "ablation".into(),
                message,
            }),
            None => Ok(Ablation::FULL),
        }
    }
}
