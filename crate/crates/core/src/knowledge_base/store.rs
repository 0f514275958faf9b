use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::{Arc, RwLock};

use super::{
    EntryDraft, EntryId, KbEntry, KbError, KbRecord, KbStats, LineDiagnostic, SourceKind,
    Taxonomy,
};

pub const ENTRIES_FILE: &str = "entries.jsonl";
pub const TAXONOMY_FILE: &str = "taxonomy.json";

const DEFAULT_PREFIX: &str = "kb";

/// Many readers or one writer; retrieval works from cloned snapshots.
pub type SharedKnowledgeBase = Arc<RwLock<KnowledgeBase>>;

#[derive(Debug, Clone)]
pub struct KnowledgeBase {
    prefix: String,
    next_seq: u64,
    taxonomy: Taxonomy,
    entries: BTreeMap<EntryId, KbEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImportReport {
    pub imported: usize,
    pub ids: Vec<EntryId>,
    pub diagnostics: Vec<LineDiagnostic>,
}

impl Default for KnowledgeBase {
    fn default() -> Self {
        Self::new(Taxonomy::default())
    }
}

impl KnowledgeBase {
    pub fn new(taxonomy: Taxonomy) -> Self {
        Self::with_prefix(DEFAULT_PREFIX, taxonomy)
    }

    pub fn with_prefix(prefix: impl Into<String>, taxonomy: Taxonomy) -> Self {
        Self {
            prefix: prefix.into(),
            next_seq: 1,
            taxonomy,
            entries: BTreeMap::new(),
        }
    }

    pub fn taxonomy(&self) -> &Taxonomy {
        &self.taxonomy
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &KbEntry> {
        self.entries.values()
    }

    /// Create (no id, or an id not yet stored) or fully replace an entry.
    pub fn put_entry(&mut self, draft: EntryDraft) -> Result<EntryId, KbError> {
        if draft.key.trim().is_empty() {
            return Err(KbError::EmptyKey);
        }
        if draft.value.is_empty() && draft.source_kind != SourceKind::DatasetSupport {
            return Err(KbError::EmptyValue);
        }
        let category = self.taxonomy.resolve(&draft.category)?;
        let id = match draft.id {
            Some(id) => {
                self.observe_id(&id);
                id
            }
            None => self.allocate_id(),
        };
        let entry = KbEntry {
            id: id.clone(),
            key: draft.key,
            value: draft.value,
            source_kind: draft.source_kind,
            category,
        };
        self.entries.insert(id.clone(), entry);
        Ok(id)
    }

    pub fn get_entry(&self, id: &EntryId) -> Option<&KbEntry> {
        self.entries.get(id)
    }

    pub fn delete_entry(&mut self, id: &EntryId) -> bool {
        self.entries.remove(id).is_some()
    }

    pub fn stats(&self) -> KbStats {
        let mut per_source: BTreeMap<SourceKind, usize> =
            SourceKind::ALL.into_iter().map(|k| (k, 0)).collect();
        let mut per_category: Vec<(String, usize)> = self
            .taxonomy
            .top_level_labels()
            .map(|l| (l.to_owned(), 0))
            .collect();
        for entry in self.entries.values() {
            *per_source.entry(entry.source_kind).or_default() += 1;
            let top = entry.category.top_level().unwrap_or_default();
            if let Some(slot) = per_category.iter_mut().find(|(l, _)| l == top) {
                slot.1 += 1;
            }
        }
        KbStats {
            total: self.entries.len(),
            per_source,
            per_category,
        }
    }

    /// Import a line-delimited record file. `source_kind`, when given,
    /// overrides the kind carried by each record; otherwise each record must
    /// carry its own. Bad lines are reported and skipped.
    pub fn import_corpus(
        &mut self,
        path: &Path,
        source_kind: Option<SourceKind>,
    ) -> Result<ImportReport, KbError> {
        let text = fs::read_to_string(path).map_err(|source| KbError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut report = ImportReport {
            imported: 0,
            ids: Vec::new(),
            diagnostics: Vec::new(),
        };
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            match self.import_line(line, source_kind) {
                Ok(id) => {
                    report.imported += 1;
                    report.ids.push(id);
                }
                Err(message) => report.diagnostics.push(LineDiagnostic {
                    line: line_no,
                    message,
                }),
            }
        }
        if report.imported == 0 {
            return Err(KbError::NoValidRecords {
                path: path.to_path_buf(),
                diagnostics: report.diagnostics,
            });
        }
        Ok(report)
    }

    fn import_line(&mut self, line: &str, source_kind: Option<SourceKind>) -> Result<EntryId, String> {
        let record: KbRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
        let draft = self.draft_from_record(record, source_kind).map_err(|e| e.to_string())?;
        self.put_entry(draft).map_err(|e| e.to_string())
    }

    fn draft_from_record(
        &self,
        record: KbRecord,
        source_kind: Option<SourceKind>,
    ) -> Result<EntryDraft, KbError> {
        let source_kind = source_kind
            .or(record.source_kind)
            .ok_or(KbError::MissingSourceKind)?;
        let category = match record.category.as_deref().map(str::trim) {
            Some(c) if !c.is_empty() => c.parse().unwrap_or_else(|e: std::convert::Infallible| match e {}),
            _ => self.taxonomy.fallback_path(),
        };
        Ok(EntryDraft {
            id: record.id.filter(|s| !s.is_empty()).map(EntryId),
            key: record.key,
            value: record.value,
            source_kind,
            category,
        })
    }

    /// Write `entries.jsonl` and `taxonomy.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), KbError> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| KbError::Io { path, source }
        };
        fs::create_dir_all(dir).map_err(io(dir))?;
        let tax_path = dir.join(TAXONOMY_FILE);
        fs::write(&tax_path, self.taxonomy.to_json() + "\n").map_err(io(&tax_path))?;

        let entries_path = dir.join(ENTRIES_FILE);
        let file = fs::File::create(&entries_path).map_err(io(&entries_path))?;
        let mut out = BufWriter::new(file);
        for entry in self.entries.values() {
            let line = serde_json::to_string(&KbRecord::from(entry))
                .expect("record serialization is infallible");
            writeln!(out, "{line}").map_err(io(&entries_path))?;
        }
        out.flush().map_err(io(&entries_path))
    }

    /// Load a store written by [`save`](Self::save). A missing taxonomy file
    /// falls back to the default tree; a missing entries file means an empty
    /// store. Any invalid stored record is a hard error.
    pub fn load(dir: &Path) -> Result<Self, KbError> {
        let tax_path = dir.join(TAXONOMY_FILE);
        let taxonomy = match fs::read_to_string(&tax_path) {
            Ok(text) => Taxonomy::from_json(&text)?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Taxonomy::default(),
            Err(source) => return Err(KbError::Io { path: tax_path, source }),
        };
        let mut kb = KnowledgeBase::new(taxonomy);
        let entries_path = dir.join(ENTRIES_FILE);
        let text = match fs::read_to_string(&entries_path) {
            Ok(text) => text,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(kb),
            Err(source) => return Err(KbError::Io { path: entries_path, source }),
        };
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let corrupt = |message: String| KbError::CorruptStore {
                path: entries_path.clone(),
                line: idx + 1,
                message,
            };
            let record: KbRecord = serde_json::from_str(line).map_err(|e| corrupt(e.to_string()))?;
            if record.id.is_none() {
                return Err(corrupt("stored record without id".into()));
            }
            let draft = kb
                .draft_from_record(record, None)
                .map_err(|e| corrupt(e.to_string()))?;
            kb.put_entry(draft).map_err(|e| corrupt(e.to_string()))?;
        }
        Ok(kb)
    }

    /// Open the store at `dir`, or an empty default store if it does not exist.
    pub fn open_or_default(dir: &Path) -> Result<Self, KbError> {
        if dir.exists() {
            Self::load(dir)
        } else {
            Ok(Self::default())
        }
    }

    fn allocate_id(&mut self) -> EntryId {
        loop {
            let id = EntryId(format!("{}-{:06}", self.prefix, self.next_seq));
            self.next_seq += 1;
            if !self.entries.contains_key(&id) {
                return id;
            }
        }
    }

    /// Keep generated ids ahead of any explicit id that uses our prefix.
    fn observe_id(&mut self, id: &EntryId) {
        let seq = id
            .as_str()
            .strip_prefix(&self.prefix)
            .and_then(|rest| rest.strip_prefix('-'))
            .and_then(|n| n.parse::<u64>().ok());
        if let Some(seq) = seq {
            self.next_seq = self.next_seq.max(seq + 1);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn draft(key: &str, value: &str) -> EntryDraft {
        EntryDraft::new(key, value, SourceKind::Wikipedia, "Fluid")
    }

    #[test]
    fn put_then_get_round_trips() {
        let mut kb = KnowledgeBase::default();
        let id = kb.put_entry(draft("Reynolds number", "ratio of inertial to viscous forces")).unwrap();
        let e = kb.get_entry(&id).unwrap();
        assert_eq!(e.key, "Reynolds number");
        assert_eq!(e.value, "ratio of inertial to viscous forces");
        assert_eq!(e.category.to_string(), "Material Science/Fluid");
    }

    #[test]
    fn unknown_category_is_rejected() {
        let mut kb = KnowledgeBase::default();
        let d = EntryDraft::new("k", "v", SourceKind::Textbook, "Material Science/NoSuchTopic");
        assert!(matches!(kb.put_entry(d), Err(KbError::UnknownCategory(_))));
        assert!(kb.is_empty());
    }

    #[test]
    fn empty_key_is_rejected() {
        let mut kb = KnowledgeBase::default();
        assert!(matches!(kb.put_entry(draft("  ", "v")), Err(KbError::EmptyKey)));
    }

    #[test]
    fn empty_value_only_for_dataset_support() {
        let mut kb = KnowledgeBase::default();
        assert!(matches!(kb.put_entry(draft("k", "")), Err(KbError::EmptyValue)));
        let d = EntryDraft::new("support sentence", "", SourceKind::DatasetSupport, "Fluid");
        assert!(kb.put_entry(d).is_ok());
    }

    #[test]
    fn second_put_with_same_id_replaces() {
        let mut kb = KnowledgeBase::default();
        let id = kb.put_entry(draft("k", "first")).unwrap();
        kb.put_entry(draft("k", "second").with_id(id.as_str())).unwrap();
        assert_eq!(kb.stats().total, 1);
        assert_eq!(kb.get_entry(&id).unwrap().value, "second");
    }

    #[test]
    fn delete_twice() {
        let mut kb = KnowledgeBase::default();
        let id = kb.put_entry(draft("k", "v")).unwrap();
        assert!(kb.delete_entry(&id));
        assert!(!kb.delete_entry(&id));
        assert!(kb.get_entry(&id).is_none());
        assert_eq!(kb.stats().total, 0);
    }

    #[test]
    fn generated_ids_skip_explicit_ones() {
        let mut kb = KnowledgeBase::default();
        kb.put_entry(draft("a", "v").with_id("kb-000001")).unwrap();
        let next = kb.put_entry(draft("b", "v")).unwrap();
        assert_eq!(next.as_str(), "kb-000002");
    }

    #[test]
    fn empty_store_stats_are_zero() {
        let s = KnowledgeBase::default().stats();
        assert_eq!(s.total, 0);
        assert_eq!(s.per_source.len(), 6);
        assert!(s.per_source.values().all(|&n| n == 0));
        assert_eq!(s.per_category.len(), 16);
        assert!(s.per_category.iter().all(|(_, n)| *n == 0));
    }

    #[test]
    fn import_reports_bad_lines_and_continues() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let lines = [
            r#"{"key":"a","value":"x","source_kind":"textbook","category":"Fluid"}"#,
            r#"{"key":"b","value":"x","source_kind":"textbook","category":"Fluid"}"#,
            r#"{"key":"c","value":"x","source_kind":"textbook" "#,
            r#"{"key":"d","value":"x","source_kind":"textbook"}"#,
            r#"{"key":"e","value":"x","source_kind":"textbook","category":"Electrical","extra":1}"#,
        ];
        fs::write(&path, lines.join("\n")).unwrap();
        let mut kb = KnowledgeBase::default();
        let report = kb.import_corpus(&path, None).unwrap();
        assert_eq!(report.imported, 4);
        assert_eq!(report.diagnostics.len(), 1);
        assert_eq!(report.diagnostics[0].line, 3);
        // missing category falls back to Miscellaneous
        let d = kb.entries().find(|e| e.key == "d").unwrap();
        assert_eq!(d.category.top_level(), Some("Miscellaneous"));
    }

    #[test]
    fn import_empty_file_fails() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        fs::write(&path, "").unwrap();
        let err = KnowledgeBase::default().import_corpus(&path, None).unwrap_err();
        assert!(matches!(err, KbError::NoValidRecords { .. }));
        assert!(err.to_string().contains("zero valid records"));
    }

    #[test]
    fn import_without_source_kind_needs_override() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        fs::write(&path, r#"{"key":"a","value":"x","category":"Fluid"}"#).unwrap();
        assert!(KnowledgeBase::default().import_corpus(&path, None).is_err());
        let mut kb = KnowledgeBase::default();
        kb.import_corpus(&path, Some(SourceKind::Formula)).unwrap();
        assert_eq!(kb.entries().next().unwrap().source_kind, SourceKind::Formula);
    }

    #[test]
    fn unreadable_file_is_io_error() {
        let err = KnowledgeBase::default()
            .import_corpus(Path::new("/nonexistent/corpus.jsonl"), None)
            .unwrap_err();
        assert!(matches!(err, KbError::Io { .. }));
    }
}
