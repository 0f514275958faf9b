mod common;

use common::{check_kb, check_manifest, random_ops, run_kb_model, SOURCE_COUNTS};
use honeycomb_core::knowledge_base::{KbManifest, KnowledgeBase, SourceKind};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn store_agrees_with_reference_map(seed in any::<u64>(), n in 1usize..300) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ops = random_ops(&mut rng, n);
        let (kb, _) = run_kb_model(&ops).map_err(TestCaseError::fail)?;
        let stats = kb.stats();
        prop_assert_eq!(stats.source_sum(), stats.total);
        prop_assert_eq!(stats.category_sum(), stats.total);

        let dir = tempfile::tempdir().unwrap();
        kb.save(dir.path()).unwrap();
        let loaded = KnowledgeBase::load(dir.path()).unwrap();
        prop_assert_eq!(loaded.stats(), stats);
    }
}

#[test]
fn thousand_ops_and_manifest() {
    check_kb(42).unwrap();
}

#[test]
fn manifest_fixture_sums_to_published_total() {
    check_manifest().unwrap();
    let m = KbManifest::load(&common::fixtures().join("kb/manifest.json")).unwrap();
    assert_eq!(m.total, 38_469);
    assert_eq!(m.per_source.len(), SOURCE_COUNTS.len());
}

#[test]
fn inconsistent_manifest_is_detected() {
    let m: KbManifest = serde_json::from_str(r#"{"total": 10, "per_source": {"formula": 4, "textbook": 5}}"#).unwrap();
    assert!(!m.is_consistent());
    assert_eq!(m.stats().total, 9);
}

#[test]
fn fixture_corpus_imports_and_persists() {
    let mut kb = KnowledgeBase::default();
    let report = kb.import_corpus(&common::fixtures().join("kb/corpus.jsonl"), None).unwrap();
    assert_eq!(report.imported, 12);
    assert!(report.diagnostics.is_empty());
    let stats = kb.stats();
    for label in ["Fluid", "Thermodynamics", "Material characterization"] {
        let n = stats.per_category.iter().find(|(l, _)| l == label).map(|(_, n)| *n);
        assert_eq!(n, Some(4), "{label}");
    }
    assert!(kb.entries().any(|e| e.source_kind == SourceKind::DatasetSupport && e.value.is_empty()));

    let stored = KnowledgeBase::load(&common::fixtures().join("kb/store")).unwrap();
    assert_eq!(stored.stats(), stats);
}
