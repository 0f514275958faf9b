use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;

use super::LlmError;

pub const TEMPLATE_IDS: [&str; 6] = [
    "assessor",
    "executor",
    "synthesis",
    "itc_generate",
    "itc_decompose",
    "gpt_example_gen",
];

const BUILTIN: [(&str, &str); 6] = [
    ("assessor", include_str!("../../templates/assessor.txt")),
    ("executor", include_str!("../../templates/executor.txt")),
    ("synthesis", include_str!("../../templates/synthesis.txt")),
    ("itc_generate", include_str!("../../templates/itc_generate.txt")),
    ("itc_decompose", include_str!("../../templates/itc_decompose.txt")),
    ("gpt_example_gen", include_str!("../../templates/gpt_example_gen.txt")),
];

fn slot_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{\{\s*([A-Za-z_][A-Za-z0-9_]*)\s*\}\}").expect("static regex"))
}

/// Prompt templates with `{{slot}}` placeholders, keyed by id.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    templates: BTreeMap<String, String>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self {
            templates: BUILTIN.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

impl TemplateSet {
    /// Built-in templates, overridden by any `<id>.txt` present in `dir`.
    pub fn with_overrides(dir: &Path) -> Result<Self, LlmError> {
        let mut set = Self::default();
        for id in TEMPLATE_IDS {
            let path = dir.join(format!("{id}.txt"));
            match fs::read_to_string(&path) {
                Ok(text) => {
                    set.templates.insert(id.to_owned(), text);
                }
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
                Err(e) => return Err(LlmError::Io(format!("{}: {e}", path.display()))),
            }
        }
        Ok(set)
    }

    pub fn insert(&mut self, id: impl Into<String>, text: impl Into<String>) {
        self.templates.insert(id.into(), text.into());
    }

    pub fn get(&self, id: &str) -> Option<&str> {
        self.templates.get(id).map(String::as_str)
    }

    /// Slot names referenced by a template, in first-use order.
    pub fn slots(&self, id: &str) -> Result<Vec<String>, LlmError> {
        let text = self.get(id).ok_or_else(|| LlmError::UnknownTemplate(id.to_owned()))?;
        let mut out: Vec<String> = Vec::new();
        for c in slot_pattern().captures_iter(text) {
            if !out.iter().any(|s| s == &c[1]) {
                out.push(c[1].to_owned());
            }
        }
        Ok(out)
    }

    /// Fill every slot. A slot missing from `slots` is an error naming it;
    /// extra entries are ignored. Substituted values are not re-expanded.
    pub fn render(&self, id: &str, slots: &[(&str, &str)]) -> Result<String, LlmError> {
        let text = self.get(id).ok_or_else(|| LlmError::UnknownTemplate(id.to_owned()))?;
        let lookup = |name: &str| slots.iter().find(|(k, _)| *k == name).map(|(_, v)| *v);
        let mut out = String::with_capacity(text.len());
        let mut last = 0;
        for c in slot_pattern().captures_iter(text) {
            let whole = c.get(0).expect("match");
            let value = lookup(&c[1]).ok_or_else(|| LlmError::MissingSlot {
                template: id.to_owned(),
                slot: c[1].to_owned(),
            })?;
            out.push_str(&text[last..whole.start()]);
            out.push_str(value);
            last = whole.end();
        }
        out.push_str(&text[last..]);
        Ok(out)
    }
}
