//! Inductive tool construction: generate a function per training question,
//! gate each through human review, decompose approved ones into atomic
//! functions and union those into the atomic tool set.

mod python;

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::llm::{LlmError, LlmGateway};
use crate::tool_hub::{write_registry_file, ParamSpec, ParamType, ToolHubError, ToolKind, ToolSpec};

pub use python::{code_blocks, docstring, parse_def, PySignature};

pub const ATOMS_FILE: &str = "atoms.jsonl";
pub const REGISTRY_FILE: &str = "registry.json";

#[derive(Debug, Error)]
pub enum ItcError {
    #[error("split ratio must lie strictly between 0 and 1, got {0}")]
    InvalidRatio(f64),
    #[error("need at least 2 questions to split, got {0}")]
    TooFewQuestions(usize),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("could not parse model output: {reason}\n--- raw output ---\n{raw}")]
    Parse { reason: String, raw: String },
    #[error("function `{0}` is not approved")]
    NotApproved(String),
    #[error("review file line {line}: {message}")]
    MalformedReview { line: usize, message: String },
    #[error("{path}: {message}")]
    File { path: PathBuf, message: String },
    #[error("atomic name `{0}` is used by atoms with different signatures")]
    NameConflict(String),
    #[error(transparent)]
    Registry(#[from] ToolHubError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSplit<T> {
    pub d_train: Vec<T>,
    pub d_test: Vec<T>,
    pub seed: u64,
    pub ratio: f64,
}

/// Seeded shuffle, then the first `round(ratio * n)` items form the train set.
pub fn split_dataset<T: Clone>(items: &[T], ratio: f64, seed: u64) -> Result<TrainSplit<T>, ItcError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(ItcError::InvalidRatio(ratio));
    }
    if items.len() < 2 {
        return Err(ItcError::TooFewQuestions(items.len()));
    }
    let mut shuffled = items.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (ratio * items.len() as f64).round() as usize;
    let d_test = shuffled.split_off(n_train);
    Ok(TrainSplit {
        d_train: shuffled,
        d_test,
        seed,
        ratio,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionStatus {
    Pending,
    Approved,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedFunction {
    pub function_id: String,
    pub question_id: String,
    pub signature: String,
    pub code: String,
    pub code_digest: String,
    pub status: FunctionStatus,
}

pub fn code_digest(code: &str) -> String {
    hex::encode(Sha256::digest(code.as_bytes()))
}

/// Ask the model for a question-specific function and parse the reply.
pub fn generate_function(gateway: &LlmGateway, question_id: &str, question: &str) -> Result<GeneratedFunction, ItcError> {
    let raw = gateway.complete_template("itc_generate", &[("question_id", question_id), ("question", question)], &[])?;
    let parse_err = |reason: &str| ItcError::Parse {
        reason: reason.to_owned(),
        raw: raw.clone(),
    };
    let (_, code) = code_blocks(&raw)
        .into_iter()
        .next()
        .ok_or_else(|| parse_err("no fenced code block"))?;
    let declared = raw
        .lines()
        .find_map(|l| l.trim_start().strip_prefix("Signature:"))
        .map(|s| s.trim().to_owned())
        .filter(|s| !s.is_empty());
    let signature = match declared {
        Some(s) => s,
        None => parse_def(&code).map(|s| s.render()).map_err(|e| parse_err(&e))?,
    };
    Ok(GeneratedFunction {
        function_id: format!("fn-{question_id}"),
        question_id: question_id.to_owned(),
        signature,
        code_digest: code_digest(&code),
        code,
        status: FunctionStatus::Pending,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Approve,
    Reject,
}

/// One line of the pending-review file (without verdict) or the verdict file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReviewRecord {
    pub function_id: String,
    pub question_id: String,
    pub code_digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Verdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Review records for every pending function, ready for a reviewer to fill in.
pub fn pending_review(functions: &[GeneratedFunction]) -> Vec<ReviewRecord> {
    functions
        .iter()
        .filter(|f| f.status == FunctionStatus::Pending)
        .map(|f| ReviewRecord {
            function_id: f.function_id.clone(),
            question_id: f.question_id.clone(),
            code_digest: f.code_digest.clone(),
            verdict: None,
            note: None,
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ReviewOutcome {
    pub approved: Vec<String>,
    pub rejected: Vec<String>,
    pub unknown_ids: Vec<String>,
    /// Listed with a digest that does not match the function's code; skipped.
    pub digest_mismatches: Vec<String>,
    /// Already decided; a function's status changes at most once.
    pub not_pending: Vec<String>,
    /// Listed without a verdict; left pending.
    pub undecided: Vec<String>,
}

/// Parse a verdict file. Any malformed line rejects the whole file.
pub fn parse_review(text: &str) -> Result<Vec<ReviewRecord>, ItcError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: ReviewRecord = serde_json::from_str(line).map_err(|e| ItcError::MalformedReview {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn apply_review(functions: &mut [GeneratedFunction], review: &[ReviewRecord]) -> ReviewOutcome {
    let mut outcome = ReviewOutcome::default();
    for rec in review {
        let Some(f) = functions.iter_mut().find(|f| f.function_id == rec.function_id) else {
            outcome.unknown_ids.push(rec.function_id.clone());
            continue;
        };
        let Some(verdict) = rec.verdict else {
            outcome.undecided.push(rec.function_id.clone());
            continue;
        };
        if f.code_digest != rec.code_digest {
            outcome.digest_mismatches.push(rec.function_id.clone());
            continue;
        }
        if f.status != FunctionStatus::Pending {
            outcome.not_pending.push(rec.function_id.clone());
            continue;
        }
        match verdict {
            Verdict::Approve => {
                f.status = FunctionStatus::Approved;
                outcome.approved.push(rec.function_id.clone());
            }
            Verdict::Reject => {
                f.status = FunctionStatus::Rejected;
                outcome.rejected.push(rec.function_id.clone());
            }
        }
    }
    outcome
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomicFunction {
    pub name: String,
    pub params: Vec<ParamSpec>,
    pub returns: ParamType,
    pub description: String,
    pub code: String,
    /// Ids of the generated functions this atom was decomposed from.
    pub provenance: Vec<String>,
}

/// Dedupe key: lowercase name plus the ordered parameter types.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NormalizedSignature {
    pub name: String,
    pub param_types: Vec<ParamType>,
}

impl AtomicFunction {
    pub fn normalized(&self) -> NormalizedSignature {
        NormalizedSignature {
            name: self.name.to_lowercase(),
            param_types: self.params.iter().map(|p| p.ty).collect(),
        }
    }

    pub fn to_tool_spec(&self) -> ToolSpec {
        ToolSpec {
            name: self.name.clone(),
            params: self.params.clone(),
            returns: self.returns,
            metadata: self.description.clone(),
            kind: ToolKind::DomainAtomic,
            timeout_secs: None,
            handler: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditOutcome {
    Decomposed,
    Refused,
    Empty,
    Failed,
}

/// Record of every decomposition attempt, used to prove that only approved
/// functions were decomposed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEvent {
    pub stage: String,
    pub function_id: String,
    pub status: FunctionStatus,
    pub outcome: AuditOutcome,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditLog {
    pub events: Vec<AuditEvent>,
}

impl AuditLog {
    fn record(&mut self, f: &GeneratedFunction, outcome: AuditOutcome, detail: impl Into<String>) {
        self.events.push(AuditEvent {
            stage: "decompose".into(),
            function_id: f.function_id.clone(),
            status: f.status,
            outcome,
            detail: detail.into(),
        });
    }

    /// Function ids that reached the model for decomposition.
    pub fn decomposed_ids(&self) -> Vec<&str> {
        self.events
            .iter()
            .filter(|e| e.outcome != AuditOutcome::Refused)
            .map(|e| e.function_id.as_str())
            .collect()
    }

    pub fn to_jsonl(&self) -> String {
        to_jsonl(&self.events)
    }
}

/// Parse a decomposition reply: each fenced block is one atom, described by
/// the nearest preceding `Description:` line or else its docstring.
pub fn parse_atoms(raw: &str, function_id: &str) -> Result<Vec<AtomicFunction>, ItcError> {
    let mut atoms = Vec::new();
    let mut prev_end = 0;
    for (start, code) in code_blocks(raw) {
        let description = raw[prev_end..start]
            .lines()
            .filter_map(|l| l.trim_start().strip_prefix("Description:"))
            .next_back()
            .map(|d| d.trim().to_owned())
            .or_else(|| docstring(&code))
            .unwrap_or_default();
        prev_end = start + 3;
        let sig = parse_def(&code).map_err(|reason| ItcError::Parse {
            reason,
            raw: raw.to_owned(),
        })?;
        atoms.push(AtomicFunction {
            name: sig.name,
            params: sig.params,
            returns: sig.returns,
            description,
            code,
            provenance: vec![function_id.to_owned()],
        });
    }
    Ok(atoms)
}

/// Decompose an approved function. Anything else is refused and logged
/// without calling the model.
pub fn decompose_function(
    gateway: &LlmGateway,
    function: &GeneratedFunction,
    audit: &mut AuditLog,
) -> Result<Vec<AtomicFunction>, ItcError> {
    if function.status != FunctionStatus::Approved {
        audit.record(function, AuditOutcome::Refused, "");
        return Err(ItcError::NotApproved(function.function_id.clone()));
    }
    let reply = gateway.complete_template(
        "itc_decompose",
        &[("function_id", &function.function_id), ("code", &function.code)],
        &[],
    );
    let atoms = match reply.map_err(ItcError::from).and_then(|r| parse_atoms(&r, &function.function_id)) {
        Ok(a) => a,
        Err(e) => {
            audit.record(function, AuditOutcome::Failed, e.to_string());
            return Err(e);
        }
    };
    if atoms.is_empty() {
        tracing::warn!(function = %function.function_id, "decomposition produced no atomic functions");
        audit.record(function, AuditOutcome::Empty, "no atomic functions in reply");
    } else {
        let names: Vec<&str> = atoms.iter().map(|a| a.name.as_str()).collect();
        audit.record(function, AuditOutcome::Decomposed, names.join(","));
    }
    Ok(atoms)
}

/// Union by normalized signature. On a collision the existing atom is kept
/// and the newcomer's provenance is appended (without duplicates).
pub fn merge_atoms(existing: &[AtomicFunction], new: &[AtomicFunction]) -> Vec<AtomicFunction> {
    let mut merged: Vec<AtomicFunction> = Vec::with_capacity(existing.len() + new.len());
    for atom in existing.iter().chain(new) {
        let key = atom.normalized();
        match merged.iter_mut().find(|a| a.normalized() == key) {
            Some(kept) => {
                for p in &atom.provenance {
                    if !kept.provenance.contains(p) {
                        kept.provenance.push(p.clone());
                    }
                }
            }
            None => merged.push(atom.clone()),
        }
    }
    merged
}

/// Write the atomic set as a tool registry file and a source bundle.
/// Atoms sharing a name but not a signature cannot both be registered.
pub fn export_atoms(atoms: &[AtomicFunction], dir: &Path) -> Result<(PathBuf, PathBuf), ItcError> {
    let mut names = BTreeSet::new();
    for a in atoms {
        if !names.insert(a.name.to_lowercase()) {
            return Err(ItcError::NameConflict(a.name.clone()));
        }
    }
    let specs: Vec<ToolSpec> = atoms.iter().map(AtomicFunction::to_tool_spec).collect();
    for s in &specs {
        s.validate()?;
    }
    fs::create_dir_all(dir).map_err(|e| file_err(dir, e))?;
    let registry = dir.join(REGISTRY_FILE);
    write_registry_file(&registry, &specs)?;
    let bundle = dir.join(ATOMS_FILE);
    write_jsonl(&bundle, atoms)?;
    Ok((registry, bundle))
}

fn file_err(path: &Path, e: impl ToString) -> ItcError {
    ItcError::File {
        path: path.to_owned(),
        message: e.to_string(),
    }
}

pub fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    let mut s = String::new();
    for item in items {
        s.push_str(&serde_json::to_string(item).expect("record serializes"));
        s.push('\n');
    }
    s
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), ItcError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| file_err(parent, e))?;
    }
    fs::write(path, to_jsonl(items)).map_err(|e| file_err(path, e))
}

/// Read a JSONL file; a missing file reads as empty.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, ItcError> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(file_err(path, e)),
    };
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| file_err(path, format!("line {}: {e}", i + 1))))
        .collect()
}
