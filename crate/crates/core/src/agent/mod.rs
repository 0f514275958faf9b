//! Two-phase agent: the Assessor narrows the registry to a few tools, the
//! Executor runs a thought/action/observation loop over them, and a final
//! synthesis call fuses the executor's answer with knowledge-base context.

mod parse;
mod trace;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::llm::{LlmError, LlmGateway};
use crate::retriever::{RetrievalHit, Retriever, RetrieverError, Sources};
use crate::tool_hub::ToolRegistry;

pub use parse::{parse_selection, parse_step, ParseFailure, Selection, StepHead};
pub use trace::{trace_records, write_trace, TraceRecord};

pub const INVALID_FORMAT_OBSERVATION: &str = "invalid action format";
pub const TRUNCATION_MARKER: &str = "...[truncated]";
const OBSERVATION_STOP: &str = "\nObservation:";

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("the tool registry is empty")]
    EmptyRegistry,
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Retriever(#[from] RetrieverError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub max_iterations: usize,
    pub max_depth: usize,
    pub max_subquestions: usize,
    pub max_tools: usize,
    pub observation_limit: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            max_iterations: 8,
            max_depth: 2,
            max_subquestions: 4,
            max_tools: 4,
            observation_limit: 2000,
        }
    }
}

/// Which components take part in answering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Ablation {
    pub kb: bool,
    pub tools: bool,
}

impl Ablation {
    pub const NONE: Ablation = Ablation { kb: false, tools: false };
    pub const KB: Ablation = Ablation { kb: true, tools: false };
    pub const TOOLS: Ablation = Ablation { kb: false, tools: true };
    pub const FULL: Ablation = Ablation { kb: true, tools: true };

    pub fn label(self) -> &'static str {
        match (self.kb, self.tools) {
            (false, false) => "none",
            (true, false) => "kb",
            (false, true) => "tools",
            (true, true) => "kb,tools",
        }
    }
}

impl Default for Ablation {
    fn default() -> Self {
        Self::FULL
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Ablation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut out = Ablation::NONE;
        let s = s.trim();
        if s == "none" {
            return Ok(out);
        }
        for part in s.split(',') {
            match part.trim() {
                "kb" => out.kb = true,
                "tools" => out.tools = true,
                other => return Err(format!("unknown ablation component `{other}` (expected kb, tools or none)")),
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assessment {
    pub query: String,
    pub selected_tools: Vec<String>,
    pub rationale: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminatedBy {
    FinalAnswer,
    MaxIterations,
    ProviderError,
}

/// One executor turn. `action` is a tool name, `final_answer`, `decompose`,
/// or `invalid` when the reply could not be parsed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub thought: String,
    pub action: String,
    pub action_input: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation: Option<String>,
    /// Whether a tool was actually invoked for this step.
    #[serde(default)]
    pub invoked: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub subtraces: Vec<ExecutorTrace>,
}

pub const ACTION_FINAL: &str = "final_answer";
pub const ACTION_DECOMPOSE: &str = "decompose";
pub const ACTION_INVALID: &str = "invalid";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutorTrace {
    pub query: String,
    pub depth: usize,
    pub steps: Vec<Step>,
    pub preliminary_solution: String,
    pub terminated_by: TerminatedBy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ExecutorTrace {
    /// Deepest nesting level below this trace (0 when nothing was decomposed).
    pub fn nesting(&self) -> usize {
        self.steps
            .iter()
            .flat_map(|s| &s.subtraces)
            .map(|t| 1 + t.nesting())
            .max()
            .unwrap_or(0)
    }

    /// Tool invocations in this trace and all nested ones.
    pub fn tool_invocations(&self) -> usize {
        self.steps
            .iter()
            .map(|s| usize::from(s.invoked) + s.subtraces.iter().map(Self::tool_invocations).sum::<usize>())
            .sum()
    }

    /// Visit this trace and every nested one.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a ExecutorTrace)) {
        f(self);
        for s in &self.steps {
            for t in &s.subtraces {
                t.walk(f);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextItem {
    /// KB entry id, or `preliminary_solution`.
    pub source: String,
    pub text: String,
    pub score: f64,
}

pub const PRELIMINARY_SOURCE: &str = "preliminary_solution";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    pub query: String,
    pub ablation: Ablation,
    pub final_text: String,
    pub kb_hits: Vec<RetrievalHit>,
    pub context: Vec<ContextItem>,
    pub assessment: Option<Assessment>,
    pub trace: Option<ExecutorTrace>,
}

/// Cut `text` to `limit` characters, marking the cut.
pub fn truncate_observation(text: &str, limit: usize) -> String {
    if text.chars().count() <= limit {
        return text.to_owned();
    }
    let mut out: String = text.chars().take(limit).collect();
    out.push_str(TRUNCATION_MARKER);
    out
}

/// One agent session's view of the shared, read-only components.
pub struct Agent<'a> {
    gateway: &'a LlmGateway,
    retriever: &'a Retriever,
    registry: &'a ToolRegistry,
    config: AgentConfig,
}

impl<'a> Agent<'a> {
    pub fn new(gateway: &'a LlmGateway, retriever: &'a Retriever, registry: &'a ToolRegistry, config: AgentConfig) -> Self {
        Self {
            gateway,
            retriever,
            registry,
            config,
        }
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn assess(&self, query: &str) -> Result<Assessment, AgentError> {
        if self.registry.is_empty() {
            return Err(AgentError::EmptyRegistry);
        }
        let ctx = self.retriever.retrieve_context(query, Sources::TOOLS)?;
        let mut candidates: Vec<&str> = ctx.tool_hits.iter().map(|h| h.target_id.as_str()).collect();
        if candidates.is_empty() {
            candidates = self.registry.list();
        }
        let tools = candidates
            .iter()
            .filter_map(|n| self.registry.spec(n))
            .map(|s| format!("- {}", s.describe().replace('\n', "\n  ")))
            .collect::<Vec<_>>()
            .join("\n");
        let max_tools = self.config.max_tools.to_string();
        let reply = self.gateway.complete_template(
            "assessor",
            &[("max_tools", &max_tools), ("query", query), ("tools", &tools)],
            &[],
        )?;

        let selection = parse_selection(&reply);
        let mut diagnostics = Vec::new();
        if !selection.found_list {
            diagnostics.push("assessor reply contained no tool list".to_owned());
        }
        let mut selected = Vec::new();
        for name in selection.names {
            if !self.registry.contains(&name) {
                diagnostics.push(format!("dropped unregistered tool `{name}`"));
            } else if selected.len() >= self.config.max_tools {
                diagnostics.push(format!("dropped `{name}`: more than {} tools selected", self.config.max_tools));
            } else {
                selected.push(name);
            }
        }
        for d in &diagnostics {
            tracing::warn!(query, "{d}");
        }
        Ok(Assessment {
            query: query.to_owned(),
            selected_tools: selected,
            rationale: selection.rationale,
            diagnostics,
        })
    }

    pub fn execute(&self, query: &str, assessment: &Assessment) -> ExecutorTrace {
        self.execute_at(query, assessment, 0)
    }

    fn tool_listing(&self, assessment: &Assessment) -> String {
        let listed: Vec<String> = assessment
            .selected_tools
            .iter()
            .filter_map(|n| self.registry.spec(n))
            .map(|s| format!("- {}", s.describe().replace('\n', "\n  ")))
            .collect();
        if listed.is_empty() {
            "(no tools selected; answer directly)".to_owned()
        } else {
            listed.join("\n")
        }
    }

    fn execute_at(&self, query: &str, assessment: &Assessment, depth: usize) -> ExecutorTrace {
        let tools = self.tool_listing(assessment);
        let mut trace = ExecutorTrace {
            query: query.to_owned(),
            depth,
            steps: Vec::new(),
            preliminary_solution: String::new(),
            terminated_by: TerminatedBy::MaxIterations,
            error: None,
        };
        let mut history = String::new();
        let mut last_observation = String::new();

        while trace.steps.len() < self.config.max_iterations {
            let reply = match self.gateway.complete_template(
                "executor",
                &[("tools", &tools), ("query", query), ("history", &history)],
                &[OBSERVATION_STOP],
            ) {
                Ok(r) => r,
                Err(e) => {
                    trace.terminated_by = TerminatedBy::ProviderError;
                    trace.error = Some(e.to_string());
                    return trace;
                }
            };

            let step = match parse_step(&reply) {
                Err(failure) => Step {
                    thought: reply.trim().to_owned(),
                    action: ACTION_INVALID.to_owned(),
                    action_input: Value::String(failure.reason),
                    observation: Some(INVALID_FORMAT_OBSERVATION.to_owned()),
                    invoked: false,
                    subtraces: Vec::new(),
                },
                Ok(StepHead::Final { thought, answer }) => {
                    trace.steps.push(Step {
                        thought,
                        action: ACTION_FINAL.to_owned(),
                        action_input: Value::String(answer.clone()),
                        observation: None,
                        invoked: false,
                        subtraces: Vec::new(),
                    });
                    trace.preliminary_solution = answer;
                    trace.terminated_by = TerminatedBy::FinalAnswer;
                    return trace;
                }
                Ok(StepHead::Tool { thought, tool, input }) => {
                    let (observation, invoked) = if assessment.selected_tools.contains(&tool) {
                        let result = self.registry.invoke_tool(&tool, &input);
                        (result.render(), true)
                    } else {
                        let allowed = if assessment.selected_tools.is_empty() {
                            "none".to_owned()
                        } else {
                            assessment.selected_tools.join(", ")
                        };
                        (format!("error: tool `{tool}` is not available; available tools: {allowed}"), false)
                    };
                    let observation = truncate_observation(&observation, self.config.observation_limit);
                    if invoked {
                        last_observation = observation.clone();
                    }
                    Step {
                        thought,
                        action: tool,
                        action_input: input,
                        observation: Some(observation),
                        invoked,
                        subtraces: Vec::new(),
                    }
                }
                Ok(StepHead::Decompose { thought, subquestions }) => {
                    let input = Value::from(subquestions.clone());
                    if depth >= self.config.max_depth {
                        Step {
                            thought,
                            action: ACTION_DECOMPOSE.to_owned(),
                            action_input: input,
                            observation: Some(format!(
                                "error: decomposition depth limit ({}) reached; answer with the available tools",
                                self.config.max_depth
                            )),
                            invoked: false,
                            subtraces: Vec::new(),
                        }
                    } else {
                        let mut subtraces = Vec::new();
                        let mut parts = Vec::new();
                        for (i, sub) in subquestions.iter().take(self.config.max_subquestions).enumerate() {
                            let child = self.execute_at(sub, assessment, depth + 1);
                            parts.push(format!("Subquestion {}: {}\nAnswer: {}", i + 1, sub, child.preliminary_solution));
                            let failed = child.terminated_by == TerminatedBy::ProviderError;
                            let err = child.error.clone();
                            subtraces.push(child);
                            if failed {
                                trace.steps.push(Step {
                                    thought,
                                    action: ACTION_DECOMPOSE.to_owned(),
                                    action_input: input,
                                    observation: None,
                                    invoked: false,
                                    subtraces,
                                });
                                trace.terminated_by = TerminatedBy::ProviderError;
                                trace.error = err;
                                return trace;
                            }
                        }
                        if subquestions.len() > self.config.max_subquestions {
                            parts.push(format!(
                                "({} further subquestions ignored; limit is {})",
                                subquestions.len() - self.config.max_subquestions,
                                self.config.max_subquestions
                            ));
                        }
                        let observation = truncate_observation(&parts.join("\n\n"), self.config.observation_limit);
                        last_observation = observation.clone();
                        Step {
                            thought,
                            action: ACTION_DECOMPOSE.to_owned(),
                            action_input: input,
                            observation: Some(observation),
                            invoked: false,
                            subtraces,
                        }
                    }
                }
            };
            history.push_str(&render_history_step(&step));
            trace.steps.push(step);
        }
        trace.preliminary_solution = last_observation;
        trace
    }

    /// Answer `query` with the components enabled by `ablation`.
    pub fn answer(&self, query: &str, ablation: Ablation) -> Result<Answer, AgentError> {
        if !ablation.kb && !ablation.tools {
            let final_text = self.gateway.complete_prompt(query)?;
            return Ok(Answer {
                query: query.to_owned(),
                ablation,
                final_text,
                kb_hits: Vec::new(),
                context: Vec::new(),
                assessment: None,
                trace: None,
            });
        }

        let (assessment, trace) = if ablation.tools {
            let assessment = self.assess(query)?;
            let trace = self.execute(query, &assessment);
            if trace.terminated_by == TerminatedBy::ProviderError {
                let message = trace.error.clone().unwrap_or_default();
                return Err(AgentError::Llm(LlmError::Remote(format!("executor aborted: {message}"))));
            }
            (Some(assessment), Some(trace))
        } else {
            (None, None)
        };

        let kb_hits = if ablation.kb {
            self.retriever.retrieve_context(query, Sources::KB)?.kb_hits
        } else {
            Vec::new()
        };

        let mut pool: Vec<(String, String)> = Vec::new();
        if let Some(t) = &trace {
            if !t.preliminary_solution.trim().is_empty() {
                pool.push((PRELIMINARY_SOURCE.to_owned(), t.preliminary_solution.clone()));
            }
        }
        for hit in &kb_hits {
            if let Some(text) = self.retriever.kb_text(&hit.target_id) {
                pool.push((hit.target_id.clone(), text.to_owned()));
            }
        }
        let texts: Vec<&str> = pool.iter().map(|(_, t)| t.as_str()).collect();
        let ranked = self.retriever.consolidate(query, &texts)?;
        let context: Vec<ContextItem> = ranked
            .into_iter()
            .map(|(i, score)| ContextItem {
                source: pool[i].0.clone(),
                text: pool[i].1.clone(),
                score,
            })
            .collect();

        let rendered = if context.is_empty() {
            "(no context)".to_owned()
        } else {
            context
                .iter()
                .enumerate()
                .map(|(i, c)| format!("[{}] ({}) {}", i + 1, c.source, c.text))
                .collect::<Vec<_>>()
                .join("\n")
        };
        let final_text = self
            .gateway
            .complete_template("synthesis", &[("context", &rendered), ("query", query)], &[])?;

        Ok(Answer {
            query: query.to_owned(),
            ablation,
            final_text,
            kb_hits,
            context,
            assessment,
            trace,
        })
    }
}

fn render_history_step(step: &Step) -> String {
    let mut out = String::new();
    if step.action == ACTION_INVALID {
        out.push_str(&step.thought);
        out.push('\n');
    } else {
        out.push_str(&format!(
            "Thought: {}\nAction: {}\nAction Input: {}\n",
            step.thought,
            step.action,
            serde_json::to_string(&step.action_input).expect("json value serializes")
        ));
    }
    if let Some(obs) = &step.observation {
        out.push_str(&format!("Observation: {obs}\n"));
    }
    out
}

/// Extract the text after the last `Final Answer:` label, if any.
pub fn final_answer_line(text: &str) -> Option<&str> {
    text.lines()
        .rev()
        .find_map(|l| l.trim_start().strip_prefix("Final Answer:"))
        .map(str::trim)
}
