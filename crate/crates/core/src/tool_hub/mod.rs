//! Tool registry with one signature/metadata interface for every tool: the
//! general search and compute tools plus domain atomic tools loaded from a
//! registry file.

mod compute;
mod registry;
mod search;
mod spec;
mod validate;

use std::path::PathBuf;
use std::sync::Arc;

use thiserror::Error;

pub use compute::{
    code_repl_spec, AtomicListing, AtomicTool, CodeReplTool, ComputeClient, ComputeError, ComputeFixture,
    ComputeKind, ComputeRequest, ComputeResponse, FixtureCompute, UnavailableCompute, WorkerClient,
    PROTOCOL_VERSION, STDOUT_CAP,
};
pub use registry::{ToolFailure, ToolHandler, ToolRegistry, ToolResult, ToolStatus, DEFAULT_TIMEOUT_SECS};
pub use search::{
    render_snippets, request_key, search_tool_specs, LiveBackend, LiveCredentials, RecordingBackend,
    ReplayBackend, SearchBackend, SearchFixture, SearchSnippet, SearchTool, UnavailableSearch, MAX_SNIPPETS,
    SEARCH_TOOLS,
};
pub use spec::{load_registry_file, write_registry_file, ParamSpec, ParamType, ToolKind, ToolSpec};
pub use validate::{render_violations, validate_args, Args, Violation};

#[derive(Debug, Error)]
pub enum ToolHubError {
    #[error("tool `{0}` is already registered")]
    DuplicateTool(String),
    #[error("unknown tool `{0}`")]
    UnknownTool(String),
    #[error("invalid spec for `{tool}`: {message}")]
    InvalidSpec { tool: String, message: String },
    #[error("tool registry file {path}: {message}")]
    RegistryFile { path: PathBuf, message: String },
}

/// Register the five search tools and `code_repl`.
pub fn register_general_tools(
    registry: &mut ToolRegistry,
    search: Arc<dyn SearchBackend>,
    compute: Arc<dyn ComputeClient>,
) -> Result<(), ToolHubError> {
    for spec in search_tool_specs() {
        let handler = Arc::new(SearchTool::new(&spec.name, Arc::clone(&search)));
        registry.register_tool(spec, handler)?;
    }
    registry.register_tool(code_repl_spec(), Arc::new(CodeReplTool::new(compute)))
}

/// Register every `domain_atomic` spec, each forwarding to its compute atomic.
pub fn register_atomic_tools(
    registry: &mut ToolRegistry,
    specs: Vec<ToolSpec>,
    compute: Arc<dyn ComputeClient>,
) -> Result<(), ToolHubError> {
    for spec in specs {
        if spec.kind != ToolKind::DomainAtomic {
            return Err(ToolHubError::InvalidSpec {
                tool: spec.name,
                message: "registry files may only declare domain_atomic tools".into(),
            });
        }
        let handler = Arc::new(AtomicTool::new(spec.atomic_name(), Arc::clone(&compute)));
        registry.register_tool(spec, handler)?;
    }
    Ok(())
}
