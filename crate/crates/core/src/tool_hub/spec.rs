use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::ToolHubError;

/// Semantic type of a tool parameter or return value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamType {
    Text,
    Integer,
    Real,
    Boolean,
    ListOfReal,
    Record,
}

impl ParamType {
    pub fn as_str(self) -> &'static str {
        match self {
            ParamType::Text => "text",
            ParamType::Integer => "integer",
            ParamType::Real => "real",
            ParamType::Boolean => "boolean",
            ParamType::ListOfReal => "list_of_real",
            ParamType::Record => "record",
        }
    }

    /// Map a Python annotation (or one of our own names) to a semantic type.
    pub fn from_annotation(annotation: &str) -> Option<Self> {
        let a: String = annotation
            .chars()
            .filter(|c| !c.is_whitespace())
            .collect::<String>()
            .to_ascii_lowercase();
        let a = a
            .strip_prefix("optional[")
            .and_then(|s| s.strip_suffix(']'))
            .unwrap_or(&a);
        Some(match a {
            "str" | "text" | "string" => ParamType::Text,
            "int" | "integer" => ParamType::Integer,
            "float" | "real" | "number" => ParamType::Real,
            "bool" | "boolean" => ParamType::Boolean,
            "list[float]" | "list_of_real" | "list-of-real" | "sequence[float]" | "list[int]" => {
                ParamType::ListOfReal
            }
            "dict" | "record" | "mapping" => ParamType::Record,
            _ if a.starts_with("dict[") => ParamType::Record,
            _ => return None,
        })
    }
}

impl fmt::Display for ParamType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: ParamType,
    #[serde(default = "default_true")]
    pub required: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<Value>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
}

fn default_true() -> bool {
    true
}

impl ParamSpec {
    pub fn required(name: &str, ty: ParamType, description: &str) -> Self {
        Self {
            name: name.into(),
            ty,
            required: true,
            default: None,
            description: description.into(),
        }
    }

    pub fn optional(name: &str, ty: ParamType, default: Value, description: &str) -> Self {
        Self {
            name: name.into(),
            ty,
            required: false,
            default: Some(default),
            description: description.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolKind {
    General,
    DomainAtomic,
}

/// Signature plus metadata description of one tool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub name: String,
    pub params: Vec<ParamSpec>,
    pub returns: ParamType,
    pub metadata: String,
    pub kind: ToolKind,
    /// Per-tool invocation timeout override.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timeout_secs: Option<u64>,
    /// Compute-runtime atomic name for `domain_atomic` tools; defaults to `name`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub handler: Option<String>,
}

impl ToolSpec {
    pub fn validate(&self) -> Result<(), ToolHubError> {
        let invalid = |m: String| Err(ToolHubError::InvalidSpec { tool: self.name.clone(), message: m });
        if self.name.is_empty()
            || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
        {
            return invalid("tool name must be a non-empty identifier".into());
        }
        let mut seen = HashSet::new();
        for p in &self.params {
            if !seen.insert(p.name.as_str()) {
                return invalid(format!("duplicate parameter `{}`", p.name));
            }
            if p.required && p.default.is_some() {
                return invalid(format!("required parameter `{}` must not have a default", p.name));
            }
            if let Some(d) = &p.default {
                if super::validate::coerce(p.ty, d).is_none() {
                    return invalid(format!("default for `{}` is not a {}", p.name, p.ty));
                }
            }
        }
        Ok(())
    }

    pub fn atomic_name(&self) -> &str {
        self.handler.as_deref().unwrap_or(&self.name)
    }

    pub fn param(&self, name: &str) -> Option<&ParamSpec> {
        self.params.iter().find(|p| p.name == name)
    }

    /// One-line signature, e.g. `google_search(query: text, timeout: integer = 30) -> text`.
    pub fn signature(&self) -> String {
        let params: Vec<String> = self
            .params
            .iter()
            .map(|p| match &p.default {
                Some(d) => format!("{}: {} = {}", p.name, p.ty, d),
                None if !p.required => format!("{}: optional {}", p.name, p.ty),
                None => format!("{}: {}", p.name, p.ty),
            })
            .collect();
        format!("{}({}) -> {}", self.name, params.join(", "), self.returns)
    }

    /// Human-readable signature and metadata. Also the tool's indexable text.
    pub fn describe(&self) -> String {
        let mut out = format!("{}\n{}", self.signature(), self.metadata.trim());
        if !self.params.is_empty() {
            out.push_str("\nParameters:");
            for p in &self.params {
                let presence = match &p.default {
                    _ if p.required => "required".to_owned(),
                    Some(d) => format!("default {d}"),
                    None => "optional".to_owned(),
                };
                out.push_str(&format!("\n- {} ({}, {})", p.name, p.ty, presence));
                if !p.description.is_empty() {
                    out.push_str(": ");
                    out.push_str(&p.description);
                }
            }
        }
        out
    }
}

/// Read a tool registry file: a JSON array of [`ToolSpec`] records.
pub fn load_registry_file(path: &Path) -> Result<Vec<ToolSpec>, ToolHubError> {
    let text = fs::read_to_string(path).map_err(|e| ToolHubError::RegistryFile {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let specs: Vec<ToolSpec> = serde_json::from_str(&text).map_err(|e| ToolHubError::RegistryFile {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    for s in &specs {
        s.validate()?;
    }
    Ok(specs)
}

pub fn write_registry_file(path: &Path, specs: &[ToolSpec]) -> Result<(), ToolHubError> {
    let text = serde_json::to_string_pretty(specs).expect("tool specs serialize");
    fs::write(path, text + "\n").map_err(|e| ToolHubError::RegistryFile {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}
