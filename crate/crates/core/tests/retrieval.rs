mod common;

use common::{check_bm25_oracle, check_two_stage, compare_bm25, random_corpus, random_query};
use honeycomb_core::retriever::{idf, Document, LexicalIndex, RetrieverConfig, TargetKind};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bm25_matches_brute_force(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let docs = random_corpus(&mut rng, 50);
        for _ in 0..5 {
            let q = random_query(&mut rng);
            prop_assert!(compare_bm25(&docs, &q).is_ok(), "{:?}", compare_bm25(&docs, &q));
        }
    }

    #[test]
    fn bm25_handles_arbitrary_text(
        docs in prop::collection::vec("[a-zA-Z0-9 ,.-]{0,40}", 1..20),
        query in "[a-zA-Z0-9 ]{0,20}",
    ) {
        let docs: Vec<(String, String)> = docs.into_iter().enumerate().map(|(i, t)| (format!("d{i:02}"), t)).collect();
        prop_assert!(compare_bm25(&docs, &query).is_ok(), "{:?}", compare_bm25(&docs, &query));
    }

    #[test]
    fn two_stage_contract_holds(seed in 0u64..10_000) {
        prop_assert!(check_two_stage(seed).is_ok(), "{:?}", check_two_stage(seed));
    }

    #[test]
    fn idf_is_non_negative_and_decreasing(n in 1usize..500, df in 0usize..500) {
        let df = df.min(n);
        prop_assert!(idf(n, df) >= 0.0);
        if df < n {
            prop_assert!(idf(n, df) >= idf(n, df + 1));
        }
    }
}

#[test]
fn oracle_fixture_corpus() {
    let text = std::fs::read_to_string(common::fixtures().join("bm25/corpus20.jsonl")).unwrap();
    let docs: Vec<(String, String)> = text
        .lines()
        .map(|l| {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            (v["id"].as_str().unwrap().to_owned(), v["text"].as_str().unwrap().to_owned())
        })
        .collect();
    assert_eq!(docs.len(), 20);
    for q in ["copper conductivity", "heat engines carnot", "copper copper", "flow", "quartz"] {
        compare_bm25(&docs, q).unwrap();
    }
}

#[test]
fn copper_query_ranks_copper_docs() {
    let index = LexicalIndex::build(vec![
        Document::new("a", TargetKind::KbEntry, "copper has high electrical conductivity"),
        Document::new("b", TargetKind::KbEntry, "steel is hard"),
        Document::new("c", TargetKind::KbEntry, "thermal conductivity of copper is high"),
    ])
    .unwrap();
    let hits = index.bm25_search("electrical conductivity copper", 10, RetrieverConfig::default().bm25());
    let ids: Vec<&str> = hits.iter().map(|h| h.target_id.as_str()).collect();
    assert_eq!(ids, ["a", "c"]);
}

#[test]
fn acceptance_checks() {
    check_bm25_oracle(1000).unwrap();
    check_two_stage(7).unwrap();
}
