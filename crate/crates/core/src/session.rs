//! Assembles the read-only components an agent session needs from a
//! [`Config`]: KB snapshot, tool registry, retriever and LLM gateway.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use thiserror::Error;

use crate::agent::{Agent, AgentConfig};
use crate::config::{ComputeMode, Config, ConfigError, EmbedderKind, ProviderSpec, SearchMode};
use crate::knowledge_base::KnowledgeBase;
use crate::llm::{
    GenerationSettings, LlmError, LlmGateway, LlmProvider, RecordingProvider, RemoteConfig, RemoteProvider,
    ReplayProvider, ScriptedProvider, TemplateSet, ENV_API_KEY,
};
use crate::retriever::{EmbeddingProvider, HashEmbedder, RemoteEmbedder, Retriever, RetrieverError};
use crate::tool_hub::{
    load_registry_file, register_atomic_tools, register_general_tools, ComputeClient, ComputeError, FixtureCompute,
    LiveBackend, LiveCredentials, RecordingBackend, ReplayBackend, SearchBackend, ToolHubError, ToolRegistry,
    UnavailableCompute, UnavailableSearch, WorkerClient,
};

#[derive(Debug, Error)]
pub enum SessionError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Tools(#[from] ToolHubError),
    #[error(transparent)]
    Compute(#[from] ComputeError),
    #[error(transparent)]
    Retriever(#[from] RetrieverError),
    #[error("{0}")]
    Missing(String),
}

pub struct Session {
    pub kb: KnowledgeBase,
    pub registry: ToolRegistry,
    pub retriever: Retriever,
    pub gateway: LlmGateway,
    pub agent_config: AgentConfig,
}

pub fn build_provider(spec: &ProviderSpec, record_dir: Option<&PathBuf>) -> Result<Arc<dyn LlmProvider>, SessionError> {
    let base: Arc<dyn LlmProvider> = match spec {
        ProviderSpec::Remote => Arc::new(RemoteProvider::new(RemoteConfig::from_env()?)),
        ProviderSpec::Scripted(path) => Arc::new(ScriptedProvider::from_file(path)?),
        ProviderSpec::Replay(dir) => Arc::new(ReplayProvider::new(dir.clone())),
    };
    Ok(match record_dir {
        Some(dir) => Arc::new(RecordingProvider::new(base, dir.clone())),
        None => base,
    })
}

fn search_backend(cfg: &Config) -> Result<Arc<dyn SearchBackend>, SessionError> {
    let fixtures = cfg.tools.fixtures_dir.clone();
    Ok(match (cfg.tools.search, fixtures) {
        (SearchMode::Replay, Some(dir)) => Arc::new(ReplayBackend::new(dir)),
        (SearchMode::Replay, None) => Arc::new(UnavailableSearch),
        (SearchMode::Live, _) => Arc::new(LiveBackend::new(LiveCredentials::from_env())),
        (SearchMode::Record, Some(dir)) => Arc::new(RecordingBackend::new(
            Arc::new(LiveBackend::new(LiveCredentials::from_env())),
            dir,
        )),
        (SearchMode::Record, None) => {
            return Err(SessionError::Missing("tools.fixtures_dir is required in record mode".into()))
        }
    })
}

fn compute_client(cfg: &Config) -> Result<Arc<dyn ComputeClient>, SessionError> {
    Ok(match cfg.tools.compute {
        ComputeMode::None => Arc::new(UnavailableCompute),
        ComputeMode::Fixture => {
            let path = cfg
                .tools
                .compute_fixtures
                .as_ref()
                .ok_or_else(|| SessionError::Missing("tools.compute_fixtures is required in fixture mode".into()))?;
            Arc::new(FixtureCompute::load(path)?)
        }
        ComputeMode::Worker => {
            if cfg.tools.worker_command.is_empty() {
                return Err(SessionError::Missing("tools.worker_command is required in worker mode".into()));
            }
            Arc::new(WorkerClient::new(cfg.tools.worker_command.clone()))
        }
    })
}

/// The general tools plus any domain atomic tools from the configured
/// registry file.
pub fn build_registry(cfg: &Config) -> Result<ToolRegistry, SessionError> {
    let mut registry =
        ToolRegistry::new().with_default_timeout(Duration::from_secs(cfg.tools.default_timeout_secs));
    let compute = compute_client(cfg)?;
    register_general_tools(&mut registry, search_backend(cfg)?, Arc::clone(&compute))?;
    if let Some(path) = &cfg.tools.registry {
        register_atomic_tools(&mut registry, load_registry_file(path)?, compute)?;
    }
    Ok(registry)
}

fn embedder(cfg: &Config) -> Result<Arc<dyn EmbeddingProvider>, SessionError> {
    let e = &cfg.embedder;
    Ok(match e.kind {
        EmbedderKind::Hash => Arc::new(HashEmbedder::new(e.dim.max(1))),
        EmbedderKind::Remote => {
            let (Some(endpoint), Some(model)) = (&e.endpoint, &e.model) else {
                return Err(SessionError::Missing("embedder.endpoint and embedder.model are required".into()));
            };
            Arc::new(RemoteEmbedder::new(endpoint, model, std::env::var(ENV_API_KEY).ok()))
        }
    })
}

impl Session {
    pub fn build(cfg: &Config, provider: &ProviderSpec, kb: KnowledgeBase) -> Result<Self, SessionError> {
        let registry = build_registry(cfg)?;
        let retriever = Retriever::new(cfg.retriever, embedder(cfg)?)?
            .with_kb(&kb)?
            .with_tools(&registry)?;
        let templates = match &cfg.llm.templates_dir {
            Some(dir) => TemplateSet::with_overrides(dir)?,
            None => TemplateSet::default(),
        };
        let gateway = LlmGateway::new(build_provider(provider, cfg.llm.record_dir.as_ref())?)
            .with_templates(templates)
            .with_settings(GenerationSettings {
                temperature: cfg.llm.temperature,
                max_output_tokens: cfg.llm.max_output_tokens,
            });
        Ok(Self {
            kb,
            registry,
            retriever,
            gateway,
            agent_config: cfg.agent,
        })
    }

    pub fn agent(&self) -> Agent<'_> {
        Agent::new(&self.gateway, &self.retriever, &self.registry, self.agent_config)
    }
}
