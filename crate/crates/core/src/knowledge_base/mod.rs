//! Categorized key/value knowledge store with CRUD, bulk import, statistics
//! and line-delimited persistence.

mod store;
mod taxonomy;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use store::{ImportReport, KnowledgeBase, SharedKnowledgeBase, ENTRIES_FILE, TAXONOMY_FILE};
pub use taxonomy::{
    CategoryNode, CategoryPath, Taxonomy, DEFAULT_CATEGORIES, DEFAULT_ROOT, FALLBACK_CATEGORY,
};

#[derive(Debug, Error)]
pub enum KbError {
    #[error("unknown category path `{0}`")]
    UnknownCategory(String),
    #[error("entry key must not be empty")]
    EmptyKey,
    #[error("entry value may only be empty for dataset_support entries")]
    EmptyValue,
    #[error("invalid taxonomy: {0}")]
    Taxonomy(String),
    #[error("missing source_kind")]
    MissingSourceKind,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: zero valid records")]
    NoValidRecords {
        path: PathBuf,
        diagnostics: Vec<LineDiagnostic>,
    },
    #[error("{path}:{line}: {message}")]
    CorruptStore {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

/// Where an entry's content came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    ArxivPaper,
    Wikipedia,
    Textbook,
    DatasetSupport,
    Formula,
    GeneratedExample,
}

impl SourceKind {
    pub const ALL: [SourceKind; 6] = [
        SourceKind::ArxivPaper,
        SourceKind::Wikipedia,
        SourceKind::Textbook,
        SourceKind::DatasetSupport,
        SourceKind::Formula,
        SourceKind::GeneratedExample,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SourceKind::ArxivPaper => "arxiv_paper",
            SourceKind::Wikipedia => "wikipedia",
            SourceKind::Textbook => "textbook",
            SourceKind::DatasetSupport => "dataset_support",
            SourceKind::Formula => "formula",
            SourceKind::GeneratedExample => "generated_example",
        }
    }
}

impl fmt::Display for SourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SourceKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SourceKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown source kind `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntryId(pub String);

impl EntryId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for EntryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for EntryId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KbEntry {
    pub id: EntryId,
    pub key: String,
    pub value: String,
    pub source_kind: SourceKind,
    pub category: CategoryPath,
}

impl KbEntry {
    /// Text indexed by the lexical retriever: key and value joined.
    pub fn indexable_text(&self) -> String {
        if self.value.is_empty() {
            self.key.clone()
        } else {
            format!("{}\n{}", self.key, self.value)
        }
    }
}

/// An entry as submitted to [`KnowledgeBase::put_entry`]; without an id the
/// store assigns one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntryDraft {
    pub id: Option<EntryId>,
    pub key: String,
    pub value: String,
    pub source_kind: SourceKind,
    pub category: CategoryPath,
}

impl EntryDraft {
    pub fn new(
        key: impl Into<String>,
        value: impl Into<String>,
        source_kind: SourceKind,
        category: &str,
    ) -> Self {
        Self {
            id: None,
            key: key.into(),
            value: value.into(),
            source_kind,
            category: category.parse().unwrap_or_else(|e: std::convert::Infallible| match e {}),
        }
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = Some(EntryId(id.into()));
        self
    }
}

impl From<KbEntry> for EntryDraft {
    fn from(e: KbEntry) -> Self {
        Self {
            id: Some(e.id),
            key: e.key,
            value: e.value,
            source_kind: e.source_kind,
            category: e.category,
        }
    }
}

/// One line of a KB record file. Unknown fields are ignored.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct KbRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub key: String,
    #[serde(default)]
    pub value: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_kind: Option<SourceKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
}

impl From<&KbEntry> for KbRecord {
    fn from(e: &KbEntry) -> Self {
        Self {
            id: Some(e.id.0.clone()),
            key: e.key.clone(),
            value: e.value.clone(),
            source_kind: Some(e.source_kind),
            category: Some(e.category.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LineDiagnostic {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for LineDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

/// Entry counts by source and by top-level category.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KbStats {
    pub total: usize,
    pub per_source: std::collections::BTreeMap<SourceKind, usize>,
    /// Keyed by top-level label, in taxonomy order when rendered.
    pub per_category: Vec<(String, usize)>,
}

impl KbStats {
    pub fn source_sum(&self) -> usize {
        self.per_source.values().sum()
    }

    pub fn category_sum(&self) -> usize {
        self.per_category.iter().map(|(_, n)| n).sum()
    }
}

/// Declared corpus counts, e.g. published statistics of a full corpus that is
/// not shipped. `total` is what the source claims; [`KbManifest::stats`]
/// recomputes it from the per-source counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KbManifest {
    pub total: usize,
    pub per_source: std::collections::BTreeMap<SourceKind, usize>,
}

impl KbManifest {
    pub fn load(path: &std::path::Path) -> Result<Self, KbError> {
        let text = std::fs::read_to_string(path).map_err(|source| KbError::Io {
            path: path.to_owned(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| KbError::CorruptStore {
            path: path.to_owned(),
            line: e.line(),
            message: e.to_string(),
        })
    }

    /// Stats implied by the per-source counts. Every source kind is listed;
    /// category counts are unknown and left empty.
    pub fn stats(&self) -> KbStats {
        let per_source = SourceKind::ALL
            .iter()
            .map(|k| (*k, self.per_source.get(k).copied().unwrap_or(0)))
            .collect::<std::collections::BTreeMap<_, _>>();
        KbStats {
            total: per_source.values().sum(),
            per_source,
            per_category: Vec::new(),
        }
    }

    /// Whether the declared total equals the sum of the per-source counts.
    pub fn is_consistent(&self) -> bool {
        self.stats().total == self.total
    }
}

impl fmt::Display for KbStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "total\t{}", self.total)?;
        for (kind, n) in &self.per_source {
            writeln!(f, "source\t{kind}\t{n}")?;
        }
        for (label, n) in &self.per_category {
            writeln!(f, "category\t{label}\t{n}")?;
        }
        Ok(())
    }
}
