use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dataset::{QuestionRecord, QuestionType};
use super::grade::{grade, GradeConfig};
use super::EvalError;
use crate::agent::{Ablation, Agent};

pub const RESULTS_FILE: &str = "results.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";

pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Percentage of correct answers, rounded to 2 decimals. Zero questions
/// score 0.
pub fn accuracy(n_correct: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        round2(100.0 * n_correct as f64 / n as f64)
    }
}

/// Accuracy gain from `before` to `after`, rounded to 2 decimals.
pub fn improvement(before: f64, after: f64) -> f64 {
    round2(after - before)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub id: String,
    pub qtype: QuestionType,
    pub topic: String,
    pub prediction: String,
    pub extracted: Option<String>,
    pub gold: String,
    pub correct: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopicScore {
    pub n: usize,
    pub n_correct: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub ablation: Ablation,
    pub n: usize,
    pub n_correct: usize,
    pub accuracy: f64,
    pub per_topic: BTreeMap<String, TopicScore>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aborted: Option<String>,
}

impl EvalReport {
    pub fn from_records(dataset: &str, ablation: Ablation, records: &[EvalRecord]) -> Self {
        let mut per_topic: BTreeMap<String, TopicScore> = BTreeMap::new();
        for r in records {
            let t = per_topic.entry(r.topic.clone()).or_insert(TopicScore {
                n: 0,
                n_correct: 0,
                accuracy: 0.0,
            });
            t.n += 1;
            t.n_correct += usize::from(r.correct);
        }
        for t in per_topic.values_mut() {
            t.accuracy = accuracy(t.n_correct, t.n);
        }
        let n_correct = records.iter().filter(|r| r.correct).count();
        Self {
            dataset: dataset.to_owned(),
            ablation,
            n: records.len(),
            n_correct,
            accuracy: accuracy(n_correct, records.len()),
            per_topic,
            aborted: None,
        }
    }

    /// A report carrying only a published accuracy, for delta arithmetic.
    pub fn published(dataset: &str, ablation: Ablation, accuracy: f64) -> Self {
        Self {
            dataset: dataset.to_owned(),
            ablation,
            n: 0,
            n_correct: 0,
            accuracy,
            per_topic: BTreeMap::new(),
            aborted: None,
        }
    }

    pub fn save(&self, records: &[EvalRecord], dir: &Path) -> Result<(), EvalError> {
        let io = |path: &Path, e: std::io::Error| EvalError::Io {
            path: path.to_owned(),
            message: e.to_string(),
        };
        fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        let mut lines = String::new();
        for r in records {
            lines.push_str(&serde_json::to_string(r).expect("record serializes"));
            lines.push('\n');
        }
        let results = dir.join(RESULTS_FILE);
        fs::write(&results, lines).map_err(|e| io(&results, e))?;
        let summary = dir.join(SUMMARY_FILE);
        let text = serde_json::to_string_pretty(self).expect("report serializes") + "\n";
        fs::write(&summary, text).map_err(|e| io(&summary, e))
    }

    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let io = |m: String| EvalError::Io {
            path: path.to_owned(),
            message: m,
        };
        let text = fs::read_to_string(path).map_err(|e| io(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| io(e.to_string()))
    }
}

/// Answer and grade every record under `ablation`. Results are ordered by
/// record id. A provider failure stops the run; what was graded so far is
/// saved (when `out_dir` is set) and returned inside the error.
pub fn run_eval(
    agent: &Agent<'_>,
    dataset: &str,
    records: &[QuestionRecord],
    ablation: Ablation,
    cfg: GradeConfig,
    out_dir: Option<&Path>,
) -> Result<(EvalReport, Vec<EvalRecord>), EvalError> {
    let mut ordered: Vec<&QuestionRecord> = records.iter().collect();
    ordered.sort_by(|a, b| a.id.cmp(&b.id));
    let mut results = Vec::with_capacity(ordered.len());
    for record in &ordered {
        let answer = match agent.answer(&record.prompt_text(), ablation) {
            Ok(a) => a,
            Err(e) => {
                let mut partial = EvalReport::from_records(dataset, ablation, &results);
                partial.aborted = Some(format!("{}: {e}", record.id));
                if let Some(dir) = out_dir {
                    partial.save(&results, dir)?;
                }
                return Err(EvalError::Aborted {
                    completed: results.len(),
                    total: ordered.len(),
                    message: e.to_string(),
                    partial: Box::new(partial),
                });
            }
        };
        let g = grade(&answer.final_text, record, cfg);
        results.push(EvalRecord {
            id: record.id.clone(),
            qtype: record.qtype,
            topic: record.topic_label().to_owned(),
            prediction: answer.final_text,
            extracted: g.extracted,
            gold: record.gold.render(),
            correct: g.correct,
        });
    }
    let report = EvalReport::from_records(dataset, ablation, &results);
    if let Some(dir) = out_dir {
        report.save(&results, dir)?;
    }
    Ok((report, results))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub ablation: Ablation,
    pub accuracy: f64,
    /// Against the configuration with both components disabled, if present.
    pub delta_vs_baseline: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairDelta {
    pub from: Ablation,
    pub to: Ablation,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationTable {
    pub dataset: String,
    pub rows: Vec<AblationRow>,
    pub pairwise: Vec<PairDelta>,
}

impl AblationTable {
    pub fn delta(&self, from: Ablation, to: Ablation) -> Option<f64> {
        self.pairwise.iter().find(|d| d.from == from && d.to == to).map(|d| d.delta)
    }
}

fn rank(a: Ablation) -> u8 {
    match (a.kb, a.tools) {
        (false, false) => 0,
        (false, true) => 1,
        (true, false) => 2,
        (true, true) => 3,
    }
}

/// Deltas between every ordered pair of configurations, rows in the order
/// none, tools, kb, kb+tools.
pub fn ablation_report(reports: &[EvalReport]) -> Result<AblationTable, EvalError> {
    let first = reports.first().ok_or(EvalError::NoReports)?;
    if let Some(other) = reports.iter().find(|r| r.dataset != first.dataset) {
        return Err(EvalError::MismatchedDatasets(format!("{} vs {}", first.dataset, other.dataset)));
    }
    let mut sorted: Vec<&EvalReport> = reports.iter().collect();
    sorted.sort_by_key(|r| rank(r.ablation));
    let baseline = sorted.iter().find(|r| r.ablation == Ablation::NONE).map(|r| r.accuracy);
    let rows = sorted
        .iter()
        .map(|r| AblationRow {
            ablation: r.ablation,
            accuracy: r.accuracy,
            delta_vs_baseline: baseline.map(|b| improvement(b, r.accuracy)),
        })
        .collect();
    let mut pairwise = Vec::new();
    for from in &sorted {
        for to in &sorted {
            pairwise.push(PairDelta {
                from: from.ablation,
                to: to.ablation,
                delta: improvement(from.accuracy, to.accuracy),
            });
        }
    }
    Ok(AblationTable {
        dataset: first.dataset.clone(),
        rows,
        pairwise,
    })
}

impl fmt::Display for AblationTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mark = |b: bool| if b { "x" } else { "" };
        writeln!(
            f,
            "{:<12} {:^8} {:^7} {:^9} {:>8} {:>9}",
            "Benchmark", "MatSciKB", "ToolHub", "Retriever", "Accuracy", "Delta"
        )?;
        for (i, row) in self.rows.iter().enumerate() {
            let name = if i == 0 { self.dataset.as_str() } else { "" };
            let delta = row.delta_vs_baseline.map(|d| format!("{d:+.2}")).unwrap_or_default();
            writeln!(
                f,
                "{:<12} {:^8} {:^7} {:^9} {:>8.2} {:>9}",
                name,
                mark(row.ablation.kb),
                mark(row.ablation.tools),
                mark(row.ablation.kb || row.ablation.tools),
                row.accuracy,
                delta
            )?;
        }
        Ok(())
    }
}
