use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::grade::parse_pairs;
use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum QuestionType {
    #[serde(rename = "MCQ")]
    Mcq,
    #[serde(rename = "MCQN")]
    Mcqn,
    #[serde(rename = "NUM")]
    Num,
    #[serde(rename = "MATCH")]
    Match,
}

impl QuestionType {
    pub fn as_str(self) -> &'static str {
        match self {
            QuestionType::Mcq => "MCQ",
            QuestionType::Mcqn => "MCQN",
            QuestionType::Num => "NUM",
            QuestionType::Match => "MATCH",
        }
    }
}

impl fmt::Display for QuestionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Gold {
    Label(String),
    Number(f64),
    Mapping(BTreeMap<String, String>),
}

impl Gold {
    pub fn render(&self) -> String {
        match self {
            Gold::Label(l) => l.clone(),
            Gold::Number(n) => n.to_string(),
            Gold::Mapping(m) => render_mapping(m),
        }
    }
}

pub fn render_mapping(m: &BTreeMap<String, String>) -> String {
    m.iter().map(|(k, v)| format!("{k}-{v}")).collect::<Vec<_>>().join(", ")
}

/// One line of a dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawQuestion {
    pub id: String,
    pub qtype: QuestionType,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<BTreeMap<String, String>>,
    pub gold: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic: Option<String>,
}

/// A validated question.
#[derive(Debug, Clone, PartialEq)]
pub struct QuestionRecord {
    pub id: String,
    pub qtype: QuestionType,
    pub text: String,
    pub options: BTreeMap<String, String>,
    pub gold: Gold,
    pub topic: Option<String>,
}

pub const UNTAGGED_TOPIC: &str = "(untagged)";

impl QuestionRecord {
    pub fn topic_label(&self) -> &str {
        self.topic.as_deref().unwrap_or(UNTAGGED_TOPIC)
    }

    /// The question as shown to the model, options listed one per line.
    pub fn prompt_text(&self) -> String {
        let mut s = self.text.trim().to_owned();
        if !self.options.is_empty() {
            s.push_str("\n\nOptions:");
            for (label, text) in &self.options {
                s.push_str(&format!("\n({label}) {text}"));
            }
        }
        s
    }
}

impl TryFrom<RawQuestion> for QuestionRecord {
    type Error = String;

    fn try_from(raw: RawQuestion) -> Result<Self, String> {
        if raw.id.trim().is_empty() {
            return Err("empty id".into());
        }
        if raw.text.trim().is_empty() {
            return Err("empty question text".into());
        }
        let options = raw.options.unwrap_or_default();
        let gold = match raw.qtype {
            QuestionType::Mcq | QuestionType::Mcqn => {
                if options.is_empty() {
                    return Err(format!("{} question has no options", raw.qtype));
                }
                let label = raw.gold.as_str().ok_or("gold must be an option label")?.trim().to_owned();
                if !options.contains_key(&label) {
                    let labels: Vec<&str> = options.keys().map(String::as_str).collect();
                    return Err(format!("gold `{label}` is not one of the options {}", labels.join(", ")));
                }
                Gold::Label(label)
            }
            QuestionType::Num => {
                let n = match &raw.gold {
                    Value::Number(n) => n.as_f64(),
                    Value::String(s) => s.trim().parse::<f64>().ok(),
                    _ => None,
                }
                .ok_or("gold must be a number")?;
                if !n.is_finite() {
                    return Err("gold must be finite".into());
                }
                Gold::Number(n)
            }
            QuestionType::Match => {
                let mapping: BTreeMap<String, String> = match &raw.gold {
                    Value::String(s) => parse_pairs(s),
                    Value::Object(m) => m
                        .iter()
                        .map(|(k, v)| {
                            let v = match v {
                                Value::String(s) => s.trim().to_owned(),
                                other => other.to_string(),
                            };
                            (k.trim().to_owned(), v)
                        })
                        .collect(),
                    _ => return Err("gold must be a pair list or a mapping".into()),
                };
                if mapping.is_empty() {
                    return Err("gold mapping is empty".into());
                }
                let targets: BTreeSet<&String> = mapping.values().collect();
                if targets.len() != mapping.len() || mapping.iter().any(|(k, v)| k.is_empty() || v.is_empty()) {
                    return Err("gold mapping is not a bijection".into());
                }
                Gold::Mapping(mapping)
            }
        };
        Ok(QuestionRecord {
            id: raw.id,
            qtype: raw.qtype,
            text: raw.text,
            options,
            gold,
            topic: raw.topic.filter(|t| !t.trim().is_empty()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InvalidRecord {
    pub line: usize,
    pub id: Option<String>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub records: Vec<QuestionRecord>,
    pub invalid: Vec<InvalidRecord>,
}

impl Dataset {
    pub fn parse(name: &str, text: &str) -> Result<Self, EvalError> {
        let mut records = Vec::new();
        let mut invalid = Vec::new();
        let mut ids = HashSet::new();
        let mut any = false;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            any = true;
            let value: Value = match serde_json::from_str(line) {
                Ok(v) => v,
                Err(e) => {
                    invalid.push(InvalidRecord {
                        line: i + 1,
                        id: None,
                        message: e.to_string(),
                    });
                    continue;
                }
            };
            let id = value.get("id").and_then(Value::as_str).map(str::to_owned);
            let checked = serde_json::from_value::<RawQuestion>(value)
                .map_err(|e| e.to_string())
                .and_then(QuestionRecord::try_from)
                .and_then(|r| {
                    if ids.insert(r.id.clone()) {
                        Ok(r)
                    } else {
                        Err(format!("duplicate id `{}`", r.id))
                    }
                });
            match checked {
                Ok(r) => records.push(r),
                Err(message) => invalid.push(InvalidRecord {
                    line: i + 1,
                    id,
                    message,
                }),
            }
        }
        if !any {
            return Err(EvalError::EmptyDataset(name.to_owned()));
        }
        Ok(Dataset {
            name: name.to_owned(),
            records,
            invalid,
        })
    }
}

/// Load a dataset file; its name is the file stem.
pub fn load_dataset(path: &Path) -> Result<Dataset, EvalError> {
    let text = fs::read_to_string(path).map_err(|e| EvalError::Io {
        path: path.to_owned(),
        message: e.to_string(),
    })?;
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset");
    Dataset::parse(name, &text)
}

impl FromStr for QuestionType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        serde_json::from_value(Value::String(s.to_owned())).map_err(|_| format!("unknown question type `{s}`"))
    }
}
