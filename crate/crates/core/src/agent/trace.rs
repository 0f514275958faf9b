//! Line-delimited serialization of an answered query, one record per line,
//! for golden-file comparison.

use serde::Serialize;
use serde_json::Value;

use super::{Ablation, Answer, ContextItem, ExecutorTrace, TerminatedBy};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TraceRecord<'a> {
    Query {
        query: &'a str,
        ablation: Ablation,
    },
    Assessment {
        selected_tools: &'a [String],
        rationale: &'a str,
        diagnostics: &'a [String],
    },
    /// `path` numbers the step within its trace, prefixed by the path of the
    /// decompose step and subquestion that spawned it, e.g. `2.1.3`.
    Step {
        path: String,
        depth: usize,
        thought: &'a str,
        action: &'a str,
        action_input: &'a Value,
        #[serde(skip_serializing_if = "Option::is_none")]
        observation: Option<&'a str>,
    },
    TraceEnd {
        path: String,
        query: &'a str,
        terminated_by: &'a TerminatedBy,
        preliminary_solution: &'a str,
    },
    Context {
        items: &'a [ContextItem],
    },
    Answer {
        final_text: &'a str,
    },
}

fn push_trace<'a>(out: &mut Vec<TraceRecord<'a>>, trace: &'a ExecutorTrace, prefix: &str) {
    for (i, step) in trace.steps.iter().enumerate() {
        let path = format!("{prefix}{}", i + 1);
        out.push(TraceRecord::Step {
            path: path.clone(),
            depth: trace.depth,
            thought: &step.thought,
            action: &step.action,
            action_input: &step.action_input,
            observation: step.observation.as_deref(),
        });
        for (j, sub) in step.subtraces.iter().enumerate() {
            push_trace(out, sub, &format!("{path}.{}.", j + 1));
        }
    }
    out.push(TraceRecord::TraceEnd {
        path: prefix.trim_end_matches('.').to_owned(),
        query: &trace.query,
        terminated_by: &trace.terminated_by,
        preliminary_solution: &trace.preliminary_solution,
    });
}

pub fn trace_records(answer: &Answer) -> Vec<TraceRecord<'_>> {
    let mut out = vec![TraceRecord::Query {
        query: &answer.query,
        ablation: answer.ablation,
    }];
    if let Some(a) = &answer.assessment {
        out.push(TraceRecord::Assessment {
            selected_tools: &a.selected_tools,
            rationale: &a.rationale,
            diagnostics: &a.diagnostics,
        });
    }
    if let Some(t) = &answer.trace {
        push_trace(&mut out, t, "");
    }
    out.push(TraceRecord::Context { items: &answer.context });
    out.push(TraceRecord::Answer {
        final_text: &answer.final_text,
    });
    out
}

/// The full JSONL text, newline-terminated.
pub fn write_trace(answer: &Answer) -> String {
    let mut s = String::new();
    for r in trace_records(answer) {
        s.push_str(&serde_json::to_string(&r).expect("trace record serializes"));
        s.push('\n');
    }
    s
}
