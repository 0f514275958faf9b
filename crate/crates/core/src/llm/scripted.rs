use std::collections::VecDeque;
use std::fs;
use std::path::Path;
use std::sync::Mutex;

use serde::Deserialize;

use super::{LlmError, LlmProvider, ProviderRequest};

#[derive(Debug, Clone)]
struct Rule {
    patterns: Vec<String>,
    responses: VecDeque<String>,
    repeat: bool,
}

#[derive(Debug, Clone)]
enum Script {
    Queue(VecDeque<String>),
    Rules(Vec<Rule>),
}

/// Deterministic provider for tests and offline runs.
///
/// In queue mode responses are handed out in order. In rule mode the first
/// rule whose patterns all occur in the prompt and that still has a response
/// answers; a rule marked `repeat` keeps returning its final response.
/// Running out is always an error.
#[derive(Debug)]
pub struct ScriptedProvider {
    script: Mutex<Script>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(String),
    Many(Vec<String>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleFile {
    #[serde(rename = "match")]
    patterns: OneOrMany,
    responses: Vec<String>,
    #[serde(default)]
    repeat: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScriptFile {
    #[serde(default)]
    responses: Option<Vec<String>>,
    #[serde(default)]
    rules: Option<Vec<RuleFile>>,
}

impl ScriptedProvider {
    pub fn queue<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            script: Mutex::new(Script::Queue(responses.into_iter().map(Into::into).collect())),
        }
    }

    pub fn rules() -> RulesBuilder {
        RulesBuilder { rules: Vec::new() }
    }

    /// Load a script file: `{"responses": [...]}` for queue mode or
    /// `{"rules": [{"match": "..." | [...], "responses": [...], "repeat": false}]}`.
    pub fn from_file(path: &Path) -> Result<Self, LlmError> {
        let text = fs::read_to_string(path).map_err(|e| LlmError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| LlmError::Io(format!("{}: {e}", path.display())))
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        let file: ScriptFile = serde_json::from_str(text).map_err(|e| e.to_string())?;
        match (file.responses, file.rules) {
            (Some(r), None) => Ok(Self::queue(r)),
            (None, Some(rules)) => {
                let mut b = Self::rules();
                for r in rules {
                    let patterns = match r.patterns {
                        OneOrMany::One(p) => vec![p],
                        OneOrMany::Many(ps) => ps,
                    };
                    b.rules.push(Rule {
                        patterns,
                        responses: r.responses.into(),
                        repeat: r.repeat,
                    });
                }
                Ok(b.build())
            }
            _ => Err("script needs exactly one of `responses` or `rules`".into()),
        }
    }

    /// Responses not yet consumed.
    pub fn remaining(&self) -> usize {
        match &*self.script.lock().unwrap_or_else(|e| e.into_inner()) {
            Script::Queue(q) => q.len(),
            Script::Rules(rules) => rules.iter().map(|r| r.responses.len()).sum(),
        }
    }
}

pub struct RulesBuilder {
    rules: Vec<Rule>,
}

impl RulesBuilder {
    pub fn rule<P, R>(mut self, patterns: &[P], responses: &[R]) -> Self
    where
        P: AsRef<str>,
        R: AsRef<str>,
    {
        self.rules.push(Rule {
            patterns: patterns.iter().map(|p| p.as_ref().to_owned()).collect(),
            responses: responses.iter().map(|r| r.as_ref().to_owned()).collect(),
            repeat: false,
        });
        self
    }

    pub fn repeating_rule<P: AsRef<str>>(mut self, patterns: &[P], response: &str) -> Self {
        self.rules.push(Rule {
            patterns: patterns.iter().map(|p| p.as_ref().to_owned()).collect(),
            responses: VecDeque::from([response.to_owned()]),
            repeat: true,
        });
        self
    }

    pub fn build(self) -> ScriptedProvider {
        ScriptedProvider {
            script: Mutex::new(Script::Rules(self.rules)),
        }
    }
}

fn excerpt(prompt: &str) -> String {
    let mut s: String = prompt.chars().take(120).collect();
    if s.len() < prompt.len() {
        s.push_str("...");
    }
    s.replace('\n', " ")
}

impl LlmProvider for ScriptedProvider {
    fn complete(&self, request: &ProviderRequest) -> Result<String, LlmError> {
        let mut script = self.script.lock().unwrap_or_else(|e| e.into_inner());
        match &mut *script {
            Script::Queue(q) => q.pop_front().ok_or(LlmError::ScriptExhausted(excerpt(&request.prompt))),
            Script::Rules(rules) => {
                let mut matched = false;
                for rule in rules.iter_mut() {
                    if !rule.patterns.iter().all(|p| request.prompt.contains(p.as_str())) {
                        continue;
                    }
                    matched = true;
                    if rule.repeat && rule.responses.len() == 1 {
                        return Ok(rule.responses[0].clone());
                    }
                    if let Some(r) = rule.responses.pop_front() {
                        return Ok(r);
                    }
                }
                if matched {
                    Err(LlmError::ScriptExhausted(excerpt(&request.prompt)))
                } else {
                    Err(LlmError::NoScriptMatch(excerpt(&request.prompt)))
                }
            }
        }
    }

    fn name(&self) -> &str {
        "scripted"
    }
}
