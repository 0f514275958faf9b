//! Question-answering evaluation: dataset loading, grading by question type,
//! accuracy reports and ablation deltas.

mod dataset;
mod grade;
mod report;

use std::path::PathBuf;

use thiserror::Error;

pub use dataset::{
    load_dataset, render_mapping, Dataset, Gold, InvalidRecord, QuestionRecord, QuestionType, RawQuestion,
    UNTAGGED_TOPIC,
};
pub use grade::{extract_number, extract_option, grade, parse_pairs, within_tolerance, Grade, GradeConfig};
pub use report::{
    ablation_report, accuracy, improvement, round2, run_eval, AblationRow, AblationTable, EvalRecord, EvalReport,
    PairDelta, TopicScore, RESULTS_FILE, SUMMARY_FILE,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("dataset `{0}` is empty")]
    EmptyDataset(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("reports cover different datasets: {0}")]
    MismatchedDatasets(String),
    #[error("no reports given")]
    NoReports,
    #[error("evaluation aborted after {completed} of {total} questions: {message}")]
    Aborted {
        completed: usize,
        total: usize,
        message: String,
        partial: Box<EvalReport>,
    },
}

#[cfg(test)]
mod tests;
