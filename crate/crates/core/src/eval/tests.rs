use std::sync::Arc;

use super::*;
use crate::agent::{Ablation, Agent, AgentConfig};
use crate::llm::{LlmGateway, ScriptedProvider};
use crate::retriever::{HashEmbedder, Retriever, RetrieverConfig};
use crate::tool_hub::ToolRegistry;

fn num_dataset(n: usize, topics: &[&str]) -> Vec<QuestionRecord> {
    let text: String = (0..n)
        .map(|i| {
            format!(
                "{{\"id\":\"q{i:03}\",\"qtype\":\"NUM\",\"text\":\"What is {i} plus one?\",\"gold\":{},\"topic\":\"{}\"}}\n",
                i + 1,
                topics[i % topics.len()]
            )
        })
        .collect();
    Dataset::parse("synthetic", &text).unwrap().records
}

fn run(records: &[QuestionRecord], answers: Vec<String>, out: Option<&std::path::Path>) -> Result<EvalReport, EvalError> {
    let gateway = LlmGateway::new(Arc::new(ScriptedProvider::queue(answers)));
    let retriever = Retriever::new(RetrieverConfig::default(), Arc::new(HashEmbedder::default())).unwrap();
    let registry = ToolRegistry::new();
    let agent = Agent::new(&gateway, &retriever, &registry, AgentConfig::default());
    run_eval(&agent, "synthetic", records, Ablation::NONE, GradeConfig::default(), out).map(|(r, _)| r)
}

#[test]
fn dataset_validation() {
    let text = concat!(
        "{\"id\":\"m1\",\"qtype\":\"MCQ\",\"text\":\"t\",\"options\":{\"A\":\"a\",\"B\":\"b\",\"C\":\"c\",\"D\":\"d\"},\"gold\":\"E\"}\n",
        "{\"id\":\"m2\",\"qtype\":\"MCQ\",\"text\":\"t\",\"options\":{\"A\":\"a\",\"B\":\"b\"},\"gold\":\"A\"}\n",
        "not json\n",
        "{\"id\":\"m2\",\"qtype\":\"NUM\",\"text\":\"t\",\"gold\":1}\n",
        "{\"id\":\"x1\",\"qtype\":\"MATCH\",\"text\":\"t\",\"gold\":\"P-1, Q-1\"}\n",
    );
    let d = Dataset::parse("d", text).unwrap();
    assert_eq!(d.records.len(), 1);
    assert_eq!(d.invalid.len(), 4);
    assert_eq!(d.invalid[0].id.as_deref(), Some("m1"));
    assert!(d.invalid[0].message.contains("E"));
    assert!(d.invalid[2].message.contains("duplicate"));
    assert!(d.invalid[3].message.contains("bijection"));
    assert!(matches!(Dataset::parse("e", "\n  \n"), Err(EvalError::EmptyDataset(_))));
}

#[test]
fn match_gold_accepts_object_form() {
    let d = Dataset::parse("d", "{\"id\":\"x\",\"qtype\":\"MATCH\",\"text\":\"t\",\"gold\":{\"P\":\"1\",\"Q\":3}}").unwrap();
    assert_eq!(d.records[0].gold.render(), "P-1, Q-3");
}

#[test]
fn accuracy_52_of_65() {
    let records = num_dataset(65, &["Thermodynamics"]);
    let answers = (0..65)
        .map(|i| if i < 52 { format!("Final Answer: {}", i + 1) } else { "Final Answer: -7".into() })
        .collect();
    let report = run(&records, answers, None).unwrap();
    assert_eq!(report.accuracy, 80.00);
    assert_eq!(report.n_correct, 52);
}

#[test]
fn all_wrong_is_zero() {
    let records = num_dataset(5, &["t"]);
    let report = run(&records, vec!["no idea".into(); 5], None).unwrap();
    assert_eq!(report.accuracy, 0.0);
}

#[test]
fn per_topic_counts_sum_to_n() {
    let records = num_dataset(10, &["Material Testing", "Thermodynamics"]);
    let answers = (0..10).map(|i| format!("Final Answer: {}", i + 1)).collect();
    let report = run(&records, answers, None).unwrap();
    assert_eq!(report.per_topic.len(), 2);
    assert_eq!(report.per_topic.values().map(|t| t.n).sum::<usize>(), 10);
    assert_eq!(accuracy(report.n_correct, report.n), report.accuracy);
}

#[test]
fn provider_failure_saves_partial_report() {
    let records = num_dataset(4, &["t"]);
    let dir = tempfile::tempdir().unwrap();
    let err = run(&records, vec!["Final Answer: 1".into(), "Final Answer: 2".into()], Some(dir.path())).unwrap_err();
    match err {
        EvalError::Aborted { completed, total, partial, .. } => {
            assert_eq!((completed, total), (2, 4));
            assert_eq!(partial.n, 2);
            assert!(partial.aborted.is_some());
        }
        other => panic!("{other:?}"),
    }
    let saved = EvalReport::load(&dir.path().join(SUMMARY_FILE)).unwrap();
    assert_eq!(saved.n, 2);
    let lines = std::fs::read_to_string(dir.path().join(RESULTS_FILE)).unwrap();
    assert_eq!(lines.lines().count(), 2);
}

#[test]
fn results_are_ordered_by_id() {
    let mut records = num_dataset(3, &["t"]);
    records.reverse();
    let gateway = LlmGateway::new(Arc::new(ScriptedProvider::queue(["1", "2", "3"])));
    let retriever = Retriever::new(RetrieverConfig::default(), Arc::new(HashEmbedder::default())).unwrap();
    let registry = ToolRegistry::new();
    let agent = Agent::new(&gateway, &retriever, &registry, AgentConfig::default());
    let (_, results) = run_eval(&agent, "d", &records, Ablation::NONE, GradeConfig::default(), None).unwrap();
    let ids: Vec<&str> = results.iter().map(|r| r.id.as_str()).collect();
    assert_eq!(ids, vec!["q000", "q001", "q002"]);
    assert!(results.iter().all(|r| r.correct));
}

fn table(accs: [f64; 4]) -> AblationTable {
    let reports: Vec<EvalReport> = [Ablation::NONE, Ablation::TOOLS, Ablation::KB, Ablation::FULL]
        .into_iter()
        .zip(accs)
        .map(|(a, acc)| EvalReport::published("bench", a, acc))
        .collect();
    ablation_report(&reports).unwrap()
}

#[test]
fn ablation_deltas() {
    let t = table([61.38, 73.23, 78.31, 79.07]);
    assert_eq!(t.delta(Ablation::KB, Ablation::FULL), Some(0.76));
    assert_eq!(t.delta(Ablation::TOOLS, Ablation::FULL), Some(5.84));
    assert_eq!(t.rows[3].delta_vs_baseline, Some(17.69));
    for a in [Ablation::NONE, Ablation::TOOLS, Ablation::KB, Ablation::FULL] {
        assert_eq!(t.delta(a, a), Some(0.0));
    }
    let rendered = t.to_string();
    assert!(rendered.contains("MatSciKB") && rendered.contains("79.07"));
}

#[test]
fn ablation_requires_one_dataset() {
    let a = EvalReport::published("x", Ablation::NONE, 1.0);
    let b = EvalReport::published("y", Ablation::FULL, 2.0);
    assert!(matches!(ablation_report(&[a, b]), Err(EvalError::MismatchedDatasets(_))));
    assert!(matches!(ablation_report(&[]), Err(EvalError::NoReports)));
}
