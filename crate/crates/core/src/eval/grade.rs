use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::dataset::{render_mapping, Gold, QuestionRecord, QuestionType};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradeConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl Default for GradeConfig {
    fn default() -> Self {
        Self {
            rel_tol: 0.01,
            abs_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grade {
    pub correct: bool,
    /// What the grader read out of the prediction, if anything.
    pub extracted: Option<String>,
}

/// Text after the last `Final Answer:` label.
fn final_answer_region(text: &str) -> Option<&str> {
    text.lines()
        .rev()
        .find_map(|l| {
            let t = l.trim_start();
            t.strip_prefix("Final Answer:")
                .or_else(|| t.strip_prefix("**Final Answer:**"))
                .or_else(|| t.strip_prefix("Final answer:"))
        })
        .map(str::trim)
}

fn tokens(text: &str) -> impl DoubleEndedIterator<Item = &str> {
    text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty())
}

/// The chosen option label: the first label in the `Final Answer:` line if
/// it names one, else the last standalone label anywhere in the text.
pub fn extract_option<'a>(text: &str, labels: impl Iterator<Item = &'a String> + Clone) -> Option<String> {
    let is_label = |t: &str| labels.clone().any(|l| l == t);
    if let Some(region) = final_answer_region(text) {
        if let Some(t) = tokens(region).find(|t| is_label(t)) {
            return Some(t.to_owned());
        }
    }
    tokens(text).rev().find(|t| is_label(t)).map(str::to_owned)
}

fn number_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"[-+]?(?:\d{1,3}(?:,\d{3})+|\d+)?(?:\.\d+)?(?:[eE][-+]?\d+)?").expect("static regex")
    })
}

fn last_number_in(text: &str) -> Option<f64> {
    let normalized = text.replace('\u{2212}', "-");
    number_pattern()
        .find_iter(&normalized)
        .filter_map(|m| {
            let s = m.as_str().replace(',', "");
            if !s.chars().any(|c| c.is_ascii_digit()) {
                return None;
            }
            s.parse::<f64>().ok().filter(|v| v.is_finite())
        })
        .last()
}

/// The last number in the `Final Answer:` line, or in the whole text when
/// that line has none.
pub fn extract_number(text: &str) -> Option<f64> {
    final_answer_region(text)
        .and_then(last_number_in)
        .or_else(|| last_number_in(text))
}

/// Whether `pred` lies within `max(abs_tol, rel_tol * |gold|)` of `gold`.
/// A slack of a few ulps keeps values exactly on the boundary inside it.
pub fn within_tolerance(pred: f64, gold: f64, cfg: GradeConfig) -> bool {
    let bound = cfg.abs_tol.max(cfg.rel_tol * gold.abs());
    let slack = 4.0 * f64::EPSILON * pred.abs().max(gold.abs());
    (pred - gold).abs() <= bound + slack
}

fn pair_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"\b([A-Za-z])\s*(?:-|\u{2013}|\u{2192}|->|:|=)\s*([A-Za-z0-9]+)\b").expect("static regex")
    })
}

/// Parse "P-1, Q-3"-style pairs. Later pairs for the same key win.
pub fn parse_pairs(text: &str) -> BTreeMap<String, String> {
    pair_pattern()
        .captures_iter(text)
        .map(|c| (c[1].to_uppercase(), c[2].to_owned()))
        .collect()
}

/// Grade one prediction. Never panics; an unreadable prediction is wrong.
pub fn grade(prediction: &str, record: &QuestionRecord, cfg: GradeConfig) -> Grade {
    match (&record.qtype, &record.gold) {
        (QuestionType::Mcq | QuestionType::Mcqn, Gold::Label(gold)) => {
            let picked = extract_option(prediction, record.options.keys());
            Grade {
                correct: picked.as_deref() == Some(gold.as_str()),
                extracted: picked,
            }
        }
        (QuestionType::Num, Gold::Number(gold)) => {
            let n = extract_number(prediction);
            Grade {
                correct: n.is_some_and(|v| within_tolerance(v, *gold, cfg)),
                extracted: n.map(|v| v.to_string()),
            }
        }
        (QuestionType::Match, Gold::Mapping(gold)) => {
            let region = final_answer_region(prediction)
                .filter(|r| !parse_pairs(r).is_empty())
                .unwrap_or(prediction);
            let pairs = parse_pairs(region);
            let gold_upper: BTreeMap<String, String> = gold.iter().map(|(k, v)| (k.to_uppercase(), v.clone())).collect();
            Grade {
                correct: !pairs.is_empty() && pairs == gold_upper,
                extracted: (!pairs.is_empty()).then(|| render_mapping(&pairs)),
            }
        }
        _ => Grade {
            correct: false,
            extracted: None,
        },
    }
}
