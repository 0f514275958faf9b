use std::collections::BTreeMap;
use std::fmt;
use std::panic::{self, AssertUnwindSafe};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{mpsc, Arc, Mutex};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::validate::{render_violations, validate_args, Args};
use super::{ToolHubError, ToolSpec};

pub const DEFAULT_TIMEOUT_SECS: u64 = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolStatus {
    Ok,
    Error,
    Timeout,
}

/// Outcome of one tool invocation. `value` is present exactly when the
/// status is `ok`; any other status carries non-empty diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolResult {
    pub status: ToolStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<Value>,
    #[serde(default)]
    pub diagnostics: String,
}

impl ToolResult {
    pub fn ok(value: Value) -> Self {
        Self {
            status: ToolStatus::Ok,
            value: Some(value),
            diagnostics: String::new(),
        }
    }

    pub fn error(diagnostics: impl Into<String>) -> Self {
        Self::failed(ToolStatus::Error, diagnostics.into())
    }

    pub fn timeout(diagnostics: impl Into<String>) -> Self {
        Self::failed(ToolStatus::Timeout, diagnostics.into())
    }

    fn failed(status: ToolStatus, mut diagnostics: String) -> Self {
        if diagnostics.trim().is_empty() {
            diagnostics = format!("{status:?}").to_lowercase();
        }
        Self {
            status,
            value: None,
            diagnostics,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == ToolStatus::Ok
    }

    /// Text shown to the executor as the observation.
    pub fn render(&self) -> String {
        match (&self.status, &self.value) {
            (ToolStatus::Ok, Some(Value::String(s))) => s.clone(),
            (ToolStatus::Ok, Some(v)) => v.to_string(),
            (ToolStatus::Ok, None) => String::new(),
            (ToolStatus::Error, _) => format!("error: {}", self.diagnostics),
            (ToolStatus::Timeout, _) => format!("timeout: {}", self.diagnostics),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ToolFailure {
    Error(String),
    Timeout(String),
}

impl fmt::Display for ToolFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ToolFailure::Error(m) => write!(f, "error: {m}"),
            ToolFailure::Timeout(m) => write!(f, "timeout: {m}"),
        }
    }
}

impl From<String> for ToolFailure {
    fn from(s: String) -> Self {
        ToolFailure::Error(s)
    }
}

pub trait ToolHandler: Send + Sync {
    /// `args` have already been validated against the tool's spec.
    fn call(&self, args: &Args) -> Result<Value, ToolFailure>;

    /// Non-reentrant handlers are serialized by the registry.
    fn reentrant(&self) -> bool {
        true
    }
}

impl<F> ToolHandler for F
where
    F: Fn(&Args) -> Result<Value, ToolFailure> + Send + Sync,
{
    fn call(&self, args: &Args) -> Result<Value, ToolFailure> {
        self(args)
    }
}

struct RegisteredTool {
    spec: ToolSpec,
    handler: Arc<dyn ToolHandler>,
    gate: Arc<Mutex<()>>,
}

/// Registry of tools sharing one signature/metadata interface.
pub struct ToolRegistry {
    tools: BTreeMap<String, RegisteredTool>,
    default_timeout: Duration,
    invocations: AtomicUsize,
}

impl fmt::Debug for ToolRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ToolRegistry")
            .field("tools", &self.tools.keys().collect::<Vec<_>>())
            .field("default_timeout", &self.default_timeout)
            .finish()
    }
}

impl Default for ToolRegistry {
    fn default() -> Self {
        Self::new()
    }
}

impl ToolRegistry {
    pub fn new() -> Self {
        Self {
            tools: BTreeMap::new(),
            default_timeout: Duration::from_secs(DEFAULT_TIMEOUT_SECS),
            invocations: AtomicUsize::new(0),
        }
    }

    pub fn with_default_timeout(mut self, timeout: Duration) -> Self {
        self.default_timeout = timeout;
        self
    }

    pub fn register_tool(&mut self, spec: ToolSpec, handler: Arc<dyn ToolHandler>) -> Result<(), ToolHubError> {
        spec.validate()?;
        if self.tools.contains_key(&spec.name) {
            return Err(ToolHubError::DuplicateTool(spec.name));
        }
        self.tools.insert(
            spec.name.clone(),
            RegisteredTool {
                spec,
                handler,
                gate: Arc::new(Mutex::new(())),
            },
        );
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tools.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tools.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tools.contains_key(name)
    }

    /// Tool names in ascending order.
    pub fn list(&self) -> Vec<&str> {
        self.tools.keys().map(String::as_str).collect()
    }

    pub fn specs(&self) -> impl Iterator<Item = &ToolSpec> {
        self.tools.values().map(|t| &t.spec)
    }

    pub fn spec(&self, name: &str) -> Option<&ToolSpec> {
        self.tools.get(name).map(|t| &t.spec)
    }

    pub fn describe_tool(&self, name: &str) -> Result<String, ToolHubError> {
        self.spec(name)
            .map(ToolSpec::describe)
            .ok_or_else(|| ToolHubError::UnknownTool(name.to_owned()))
    }

    /// Total `invoke_tool` calls so far, including failed ones.
    pub fn invocations(&self) -> usize {
        self.invocations.load(Ordering::SeqCst)
    }

    /// Validate `args` and run the handler on a worker thread under the
    /// tool's timeout. Every outcome, including a handler panic, comes back
    /// as a [`ToolResult`].
    pub fn invoke_tool(&self, name: &str, args: &Value) -> ToolResult {
        self.invocations.fetch_add(1, Ordering::SeqCst);
        let Some(tool) = self.tools.get(name) else {
            return ToolResult::error(format!("unknown tool `{name}`"));
        };
        let args = match validate_args(&tool.spec, args) {
            Ok(a) => a,
            Err(v) => return ToolResult::error(format!("invalid arguments: {}", render_violations(&v))),
        };
        let timeout = args
            .get("timeout")
            .and_then(Value::as_u64)
            .filter(|_| tool.spec.param("timeout").is_some())
            .map(Duration::from_secs)
            .or(tool.spec.timeout_secs.map(Duration::from_secs))
            .unwrap_or(self.default_timeout);

        let handler = Arc::clone(&tool.handler);
        let gate = Arc::clone(&tool.gate);
        let (tx, rx) = mpsc::channel();
        let spawned = thread::Builder::new()
            .name(format!("tool-{name}"))
            .spawn(move || {
                let _guard = (!handler.reentrant()).then(|| gate.lock().unwrap_or_else(|e| e.into_inner()));
                let outcome = panic::catch_unwind(AssertUnwindSafe(|| handler.call(&args)));
                let _ = tx.send(outcome);
            });
        if let Err(e) = spawned {
            return ToolResult::error(format!("failed to start handler: {e}"));
        }
        match rx.recv_timeout(timeout) {
            Ok(Ok(Ok(value))) => ToolResult::ok(value),
            Ok(Ok(Err(ToolFailure::Error(m)))) => ToolResult::error(m),
            Ok(Ok(Err(ToolFailure::Timeout(m)))) => ToolResult::timeout(m),
            Ok(Err(payload)) => ToolResult::error(format!("handler panicked: {}", panic_message(&payload))),
            Err(mpsc::RecvTimeoutError::Timeout) => {
                ToolResult::timeout(format!("`{name}` exceeded {}s", timeout.as_secs_f64()))
            }
            Err(mpsc::RecvTimeoutError::Disconnected) => ToolResult::error("handler thread exited without a result"),
        }
    }
}

fn panic_message(payload: &Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        (*s).to_owned()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "non-string panic payload".to_owned()
    }
}
