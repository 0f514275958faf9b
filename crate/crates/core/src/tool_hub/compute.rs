//! Client side of the compute-worker protocol, plus the `code_repl` and
//! domain-atomic tool handlers that forward to it.
//!
//! The worker speaks one JSON record per line on stdin/stdout. Its first
//! output line is a handshake `{"protocol_version": "1"}`; any other version
//! gets the worker killed.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::{mpsc, Arc, Mutex};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::registry::{ToolFailure, ToolHandler, ToolStatus};
use super::validate::Args;
use super::{ParamSpec, ParamType, ToolKind, ToolSpec};

pub const PROTOCOL_VERSION: &str = "1";
pub const STDOUT_CAP: usize = 10_000;

/// Extra time granted beyond the request timeout before the worker is
/// considered hung.
const GRACE: Duration = Duration::from_secs(2);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComputeKind {
    Snippet,
    AtomicCall,
    ListAtomics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComputeRequest {
    pub kind: ComputeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atomic_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub args: Option<Args>,
    /// Seconds.
    pub timeout: f64,
}

impl ComputeRequest {
    pub fn snippet(code: impl Into<String>, timeout: f64) -> Self {
        Self {
            kind: ComputeKind::Snippet,
            code: Some(code.into()),
            atomic_name: None,
            args: None,
            timeout,
        }
    }

    pub fn atomic_call(name: impl Into<String>, args: Args, timeout: f64) -> Self {
        Self {
            kind: ComputeKind::AtomicCall,
            code: None,
            atomic_name: Some(name.into()),
            args: Some(args),
            timeout,
        }
    }

    pub fn list_atomics(timeout: f64) -> Self {
        Self {
            kind: ComputeKind::ListAtomics,
            code: None,
            atomic_name: None,
            args: None,
            timeout,
        }
    }

    pub fn validate(&self) -> Result<(), ComputeError> {
        let ok = match self.kind {
            ComputeKind::Snippet => self.code.is_some(),
            ComputeKind::AtomicCall => self.atomic_name.is_some() && self.args.is_some(),
            ComputeKind::ListAtomics => true,
        };
        if ok && self.timeout > 0.0 {
            Ok(())
        } else {
            Err(ComputeError::Protocol(format!("malformed {:?} request", self.kind)))
        }
    }

    /// Fixture key: the request without its timeout.
    pub fn key(&self) -> String {
        let v = json!({
            "kind": self.kind,
            "code": self.code,
            "atomic_name": self.atomic_name,
            "args": self.args,
        });
        v.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComputeResponse {
    pub status: ToolStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<Value>,
    #[serde(default)]
    pub stdout: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<String>,
}

impl ComputeResponse {
    /// Map onto a tool outcome: the result value, or captured stdout when the
    /// snippet produced no value.
    pub fn into_tool_outcome(self) -> Result<Value, ToolFailure> {
        let diag = || self.diagnostics.clone().unwrap_or_else(|| "compute worker failure".into());
        match self.status {
            ToolStatus::Ok => Ok(match self.result {
                Some(v) if !v.is_null() => v,
                _ => Value::String(self.stdout.chars().take(STDOUT_CAP).collect()),
            }),
            ToolStatus::Error => Err(ToolFailure::Error(diag())),
            ToolStatus::Timeout => Err(ToolFailure::Timeout(diag())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AtomicListing {
    pub name: String,
    pub signature: String,
}

#[derive(Debug, thiserror::Error)]
pub enum ComputeError {
    #[error("compute protocol: {0}")]
    Protocol(String),
    #[error("compute worker: {0}")]
    Worker(String),
    #[error("compute fixture: {0}")]
    Fixture(String),
}

pub trait ComputeClient: Send + Sync {
    fn execute(&self, request: &ComputeRequest) -> Result<ComputeResponse, ComputeError>;

    fn list_atomics(&self) -> Result<Vec<AtomicListing>, ComputeError> {
        let resp = self.execute(&ComputeRequest::list_atomics(10.0))?;
        match (resp.status, resp.result) {
            (ToolStatus::Ok, Some(v)) => {
                serde_json::from_value(v).map_err(|e| ComputeError::Protocol(e.to_string()))
            }
            _ => Err(ComputeError::Worker(
                resp.diagnostics.unwrap_or_else(|| "list_atomics failed".into()),
            )),
        }
    }
}

/// Recorded request/response pairs standing in for a live worker.
#[derive(Debug, Clone, Default)]
pub struct FixtureCompute {
    responses: BTreeMap<String, ComputeResponse>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComputeFixture {
    pub request: ComputeRequest,
    pub response: ComputeResponse,
}

impl FixtureCompute {
    pub fn load(path: &Path) -> Result<Self, ComputeError> {
        let text = fs::read_to_string(path).map_err(|e| ComputeError::Fixture(format!("{}: {e}", path.display())))?;
        let mut responses = BTreeMap::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let f: ComputeFixture = serde_json::from_str(line)
                .map_err(|e| ComputeError::Fixture(format!("{}:{}: {e}", path.display(), i + 1)))?;
            responses.insert(f.request.key(), f.response);
        }
        Ok(Self { responses })
    }

    pub fn insert(&mut self, request: &ComputeRequest, response: ComputeResponse) {
        self.responses.insert(request.key(), response);
    }
}

impl ComputeClient for FixtureCompute {
    fn execute(&self, request: &ComputeRequest) -> Result<ComputeResponse, ComputeError> {
        request.validate()?;
        self.responses
            .get(&request.key())
            .cloned()
            .ok_or_else(|| ComputeError::Fixture(format!("no recorded response for {}", request.key())))
    }
}

struct Worker {
    child: Child,
    stdin: ChildStdin,
    lines: mpsc::Receiver<String>,
}

impl Worker {
    fn spawn(command: &[String]) -> Result<Self, ComputeError> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| ComputeError::Worker("empty worker command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| ComputeError::Worker(format!("cannot start `{program}`: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, lines) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let Ok(line) = line else { break };
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        let mut worker = Self { child, stdin, lines };
        let handshake = worker
            .lines
            .recv_timeout(Duration::from_secs(10))
            .map_err(|_| worker.fail("no handshake from worker"))?;
        let version = serde_json::from_str::<Value>(&handshake)
            .ok()
            .and_then(|v| v["protocol_version"].as_str().map(str::to_owned));
        if version.as_deref() != Some(PROTOCOL_VERSION) {
            return Err(worker.fail(&format!("handshake mismatch: {handshake}")));
        }
        Ok(worker)
    }

    fn fail(&mut self, message: &str) -> ComputeError {
        let _ = self.child.kill();
        let _ = self.child.wait();
        ComputeError::Worker(message.to_owned())
    }
}

impl Drop for Worker {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Owns one worker process, serializes requests to it and respawns it
/// after a crash or hang.
pub struct WorkerClient {
    command: Vec<String>,
    worker: Mutex<Option<Worker>>,
}

impl WorkerClient {
    pub fn new(command: Vec<String>) -> Self {
        Self {
            command,
            worker: Mutex::new(None),
        }
    }
}

impl ComputeClient for WorkerClient {
    fn execute(&self, request: &ComputeRequest) -> Result<ComputeResponse, ComputeError> {
        request.validate()?;
        let mut slot = self.worker.lock().unwrap_or_else(|e| e.into_inner());
        if slot.is_none() {
            *slot = Some(Worker::spawn(&self.command)?);
        }
        let worker = slot.as_mut().expect("worker present");
        let line = serde_json::to_string(request).expect("request serializes");
        if writeln!(worker.stdin, "{line}").and_then(|_| worker.stdin.flush()).is_err() {
            *slot = None;
            return Err(ComputeError::Worker("worker exited; it will be restarted".into()));
        }
        let wait = Duration::from_secs_f64(request.timeout) + GRACE;
        match worker.lines.recv_timeout(wait) {
            Ok(reply) => serde_json::from_str(&reply).map_err(|e| {
                *slot = None;
                ComputeError::Protocol(format!("bad response `{reply}`: {e}"))
            }),
            Err(mpsc::RecvTimeoutError::Timeout) => {
                *slot = None;
                Ok(ComputeResponse {
                    status: ToolStatus::Timeout,
                    result: None,
                    stdout: String::new(),
                    diagnostics: Some(format!("worker did not answer within {:.1}s; restarted", wait.as_secs_f64())),
                })
            }
            Err(mpsc::RecvTimeoutError::Disconnected) => {
                *slot = None;
                Err(ComputeError::Worker("worker crashed; it will be restarted".into()))
            }
        }
    }
}

fn timeout_of(args: &Args) -> f64 {
    args.get("timeout").and_then(Value::as_f64).unwrap_or(30.0)
}

/// `code_repl`: evaluates a numeric snippet in the compute sandbox.
pub struct CodeReplTool {
    client: Arc<dyn ComputeClient>,
}

impl CodeReplTool {
    pub fn new(client: Arc<dyn ComputeClient>) -> Self {
        Self { client }
    }
}

impl ToolHandler for CodeReplTool {
    fn call(&self, args: &Args) -> Result<Value, ToolFailure> {
        let code = args.get("code").and_then(Value::as_str).unwrap_or_default();
        let req = ComputeRequest::snippet(code, timeout_of(args));
        self.client
            .execute(&req)
            .map_err(|e| ToolFailure::Error(e.to_string()))?
            .into_tool_outcome()
    }

    fn reentrant(&self) -> bool {
        false
    }
}

/// Handler for a `domain_atomic` tool, resolved by atomic name.
pub struct AtomicTool {
    atomic_name: String,
    client: Arc<dyn ComputeClient>,
}

impl AtomicTool {
    pub fn new(atomic_name: impl Into<String>, client: Arc<dyn ComputeClient>) -> Self {
        Self {
            atomic_name: atomic_name.into(),
            client,
        }
    }
}

impl ToolHandler for AtomicTool {
    fn call(&self, args: &Args) -> Result<Value, ToolFailure> {
        let mut call_args = args.clone();
        let timeout = timeout_of(&call_args);
        call_args.remove("timeout");
        let req = ComputeRequest::atomic_call(&self.atomic_name, call_args, timeout);
        self.client
            .execute(&req)
            .map_err(|e| ToolFailure::Error(e.to_string()))?
            .into_tool_outcome()
    }

    fn reentrant(&self) -> bool {
        false
    }
}

/// Stand-in used when no compute runtime is configured.
pub struct UnavailableCompute;

impl ComputeClient for UnavailableCompute {
    fn execute(&self, _: &ComputeRequest) -> Result<ComputeResponse, ComputeError> {
        Err(ComputeError::Worker("no compute runtime configured".into()))
    }
}

pub fn code_repl_spec() -> ToolSpec {
    ToolSpec {
        name: "code_repl".into(),
        params: vec![
            ParamSpec::required(
                "code",
                ParamType::Text,
                "arithmetic or math expressions; the last expression or a variable named `result` is returned",
            ),
            ParamSpec::optional("timeout", ParamType::Integer, json!(30), "seconds before execution is stopped"),
        ],
        returns: ParamType::Text,
        metadata: "Sandboxed numeric calculator for basic computations the language model should not do \
                   in its head: unit conversions, formula evaluation, arithmetic."
            .into(),
        kind: ToolKind::General,
        timeout_secs: None,
        handler: None,
    }
}
