//! Checks shared by the integration tests and the acceptance binary. Each
//! returns a one-line summary on success and a reason on failure.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use honeycomb_core::agent::{
    write_trace, Ablation, Agent, AgentConfig, Assessment, ExecutorTrace, TerminatedBy, ACTION_DECOMPOSE,
    ACTION_FINAL,
};
use honeycomb_core::config::Config;
use honeycomb_core::eval::{ablation_report, grade, improvement, Dataset, EvalReport, GradeConfig};
use honeycomb_core::itc::{
    apply_review, decompose_function, generate_function, merge_atoms, parse_review, AtomicFunction, AuditLog,
    FunctionStatus,
};
use honeycomb_core::knowledge_base::{EntryDraft, EntryId, KbManifest, KnowledgeBase, SourceKind};
use honeycomb_core::llm::{LlmError, LlmGateway, LlmProvider, ProviderRequest, ScriptedProvider};
use honeycomb_core::retriever::{
    Document, EmbeddingProvider, HashEmbedder, LexicalIndex, Retriever, RetrieverConfig, Sources, Stage, TargetKind,
};
use honeycomb_core::session::{build_registry, Session};
use honeycomb_core::tool_hub::{Args, ParamSpec, ParamType, ToolKind, ToolRegistry, ToolSpec};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

pub type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {{
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    }};
}

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

// ---------------------------------------------------------------------------
// BM25

const VOCAB: [&str; 30] = [
    "steel", "copper", "alloy", "grain", "boundary", "stress", "strain", "yield", "phase", "diagram", "crystal",
    "lattice", "diffusion", "viscosity", "fluid", "heat", "entropy", "magnet", "domain", "polymer", "ceramic",
    "glass", "oxide", "perovskite", "band", "gap", "silicon", "fatigue", "creep", "hardness",
];

fn word(rng: &mut ChaCha8Rng) -> &'static str {
    // Skewed towards the front so document frequencies vary widely.
    let a = rng.gen_range(0..VOCAB.len());
    let b = rng.gen_range(0..VOCAB.len());
    VOCAB[a.min(b)]
}

pub fn random_corpus(rng: &mut ChaCha8Rng, max_docs: usize) -> Vec<(String, String)> {
    let n = rng.gen_range(1..=max_docs);
    (0..n)
        .map(|i| {
            let len = rng.gen_range(1..=25);
            let mut text = String::new();
            for j in 0..len {
                if j > 0 {
                    text.push_str([" ", ", ", " - ", ". "].choose(rng).unwrap());
                }
                let w = word(rng);
                if rng.gen_bool(0.2) {
                    text.push_str(&w.to_uppercase());
                } else {
                    text.push_str(w);
                }
            }
            (format!("doc{i:03}"), text)
        })
        .collect()
}

pub fn random_query(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(1..=5);
    let mut terms: Vec<&str> = (0..n).map(|_| word(rng)).collect();
    if rng.gen_bool(0.2) {
        terms.push("unobtainium");
    }
    terms.join(" ")
}

fn oracle_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() {
            cur.extend(c.to_lowercase());
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Brute-force BM25: every document against every query token, no index.
pub fn oracle_bm25(docs: &[(String, String)], query: &str, k1: f64, b: f64) -> BTreeMap<String, f64> {
    let tokenized: Vec<Vec<String>> = docs.iter().map(|(_, t)| oracle_tokens(t)).collect();
    let n = docs.len() as f64;
    let avgdl = tokenized.iter().map(Vec::len).sum::<usize>() as f64 / n;
    let q = oracle_tokens(query);
    let mut out = BTreeMap::new();
    for (i, toks) in tokenized.iter().enumerate() {
        let mut score = 0.0;
        let mut matched = false;
        for term in &q {
            let tf = toks.iter().filter(|t| *t == term).count() as f64;
            if tf == 0.0 {
                continue;
            }
            matched = true;
            let df = tokenized.iter().filter(|d| d.contains(term)).count() as f64;
            let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln().max(0.0);
            let dl = toks.len() as f64;
            score += idf * (tf * (k1 + 1.0)) / (tf + k1 * (1.0 - b + b * dl / avgdl));
        }
        if matched {
            out.insert(docs[i].0.clone(), score);
        }
    }
    out
}

/// Engine scores against the oracle for one corpus and query.
pub fn compare_bm25(docs: &[(String, String)], query: &str) -> Result<(), String> {
    let cfg = RetrieverConfig::default();
    let index = LexicalIndex::build(
        docs.iter()
            .map(|(id, t)| Document::new(id.clone(), TargetKind::KbEntry, t.clone())),
    )
    .map_err(|e| e.to_string())?;
    let hits = index.bm25_search(query, docs.len(), cfg.bm25());
    let expected = oracle_bm25(docs, query, cfg.k1, cfg.b);
    ensure!(
        hits.len() == expected.len(),
        "query `{query}`: {} hits, oracle has {}",
        hits.len(),
        expected.len()
    );
    for h in &hits {
        let want = expected
            .get(&h.target_id)
            .ok_or_else(|| format!("query `{query}`: unexpected hit {}", h.target_id))?;
        ensure!(
            (h.score - want).abs() <= 1e-9,
            "query `{query}` doc {}: engine {} oracle {want}",
            h.target_id,
            h.score
        );
    }
    for w in hits.windows(2) {
        ensure!(
            w[0].score > w[1].score || (w[0].score == w[1].score && w[0].target_id < w[1].target_id),
            "query `{query}`: {} before {} violates ordering",
            w[0].target_id,
            w[1].target_id
        );
    }
    Ok(())
}

pub fn check_bm25_oracle(seed: u64) -> Check {
    let start = Instant::now();
    let mut compared = 0;
    for c in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed + c);
        let docs = random_corpus(&mut rng, 50);
        for _ in 0..10 {
            compare_bm25(&docs, &random_query(&mut rng))?;
            compared += 1;
        }
    }
    let elapsed = start.elapsed();
    ensure!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
    Ok(format!("{compared} queries over 5 corpora within 1e-9 in {elapsed:.2?}"))
}

// ---------------------------------------------------------------------------
// Two-stage retrieval

fn standalone_cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

pub fn check_two_stage(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kb = KnowledgeBase::default();
    let corpus = random_corpus(&mut rng, 40);
    for (i, (_, text)) in corpus.iter().enumerate() {
        // A unique marker word per entry gives queries with one candidate.
        kb.put_entry(EntryDraft::new(format!("entry{i}"), format!("{text} marker{i}"), SourceKind::Textbook, "Fluid"))
            .map_err(|e| e.to_string())?;
    }
    let embedder = HashEmbedder::default();
    let cfg = RetrieverConfig::default();
    let retriever = Retriever::new(cfg, Arc::new(embedder.clone()))
        .and_then(|r| r.with_kb(&kb))
        .map_err(|e| e.to_string())?;
    let index = retriever.kb_index().ok_or("no kb index")?;
    let mut queries: Vec<String> = (0..20).map(|_| random_query(&mut rng)).collect();
    queries.push("marker0".into());
    queries.push(format!("marker1 marker{}", corpus.len() - 1));
    queries.push("unobtainium".into());

    let mut short = 0;
    for q in &queries {
        let ctx = retriever.retrieve_context(q, Sources::KB).map_err(|e| e.to_string())?;
        let lexical = index.bm25_search(q, cfg.n_first_stage, cfg.bm25());
        let want_len = cfg.k_final.min(lexical.len());
        short += usize::from(want_len < cfg.k_final);
        ensure!(
            ctx.kb_hits.len() == want_len,
            "query `{q}`: {} hits, expected {want_len}",
            ctx.kb_hits.len()
        );
        for h in &ctx.kb_hits {
            ensure!(h.stage == Stage::Reranked, "query `{q}`: hit not marked reranked");
            ensure!(
                lexical.iter().any(|l| l.target_id == h.target_id),
                "query `{q}`: {} is not a lexical candidate",
                h.target_id
            );
        }
        let qv = embedder.embed(q).map_err(|e| e.to_string())?;
        let mut recomputed: Vec<(String, f64)> = lexical
            .iter()
            .map(|l| {
                let tv = embedder.embed(index.text(&l.target_id).unwrap_or("")).expect("hash embedding");
                (l.target_id.clone(), standalone_cosine(&qv, &tv))
            })
            .collect();
        recomputed.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        recomputed.truncate(want_len);
        for (h, (id, score)) in ctx.kb_hits.iter().zip(&recomputed) {
            ensure!(
                &h.target_id == id && (h.score - score).abs() <= 1e-12,
                "query `{q}`: got ({}, {}), recomputed ({id}, {score})",
                h.target_id,
                h.score
            );
        }
    }
    ensure!(short > 0, "no query exercised fewer than k_final candidates");
    Ok(format!("{} queries, {short} with fewer than {} candidates", queries.len(), cfg.k_final))
}

// ---------------------------------------------------------------------------
// Knowledge base

#[derive(Debug, Clone)]
pub enum KbOp {
    Put { id: Option<usize>, key: String, value: String, kind: usize, category: usize },
    Get(usize),
    Delete(usize),
}

const CATEGORIES: [&str; 5] = ["Fluid", "Thermodynamics", "Magnetism", "Material Science/Mechanical", ""];

pub fn random_ops(rng: &mut ChaCha8Rng, n: usize) -> Vec<KbOp> {
    (0..n)
        .map(|_| match rng.gen_range(0..100) {
            0..=44 => KbOp::Put {
                id: if rng.gen_bool(0.9) { Some(rng.gen_range(0..40)) } else { None },
                key: format!("key{}", rng.gen_range(0..1000)),
                value: format!("value {}", rng.gen::<u32>()),
                kind: rng.gen_range(0..SourceKind::ALL.len()),
                category: rng.gen_range(0..CATEGORIES.len()),
            },
            45..=72 => KbOp::Get(rng.gen_range(0..40)),
            _ => KbOp::Delete(rng.gen_range(0..40)),
        })
        .collect()
}

type Model = BTreeMap<String, (String, String, SourceKind, String)>;

fn expected_top(category: &str) -> String {
    match category.rsplit('/').next() {
        Some(c) if !c.is_empty() => c.to_owned(),
        _ => "Miscellaneous".to_owned(),
    }
}

/// Apply `ops` to a fresh store and a reference map, comparing after each.
pub fn run_kb_model(ops: &[KbOp]) -> Result<(KnowledgeBase, Model), String> {
    let mut kb = KnowledgeBase::default();
    let mut model: Model = BTreeMap::new();
    for (step, op) in ops.iter().enumerate() {
        match op {
            KbOp::Put { id, key, value, kind, category } => {
                let kind = SourceKind::ALL[*kind];
                let mut draft = EntryDraft::new(key.clone(), value.clone(), kind, CATEGORIES[*category]);
                if let Some(i) = id {
                    draft = draft.with_id(format!("e{i}"));
                }
                let got = kb.put_entry(draft).map_err(|e| format!("op {step}: {e}"))?;
                if let Some(i) = id {
                    ensure!(got.as_str() == format!("e{i}"), "op {step}: id {got} for explicit e{i}");
                } else {
                    ensure!(!model.contains_key(got.as_str()), "op {step}: allocated id {got} collides");
                }
                model.insert(got.0, (key.clone(), value.clone(), kind, expected_top(CATEGORIES[*category])));
            }
            KbOp::Get(i) => {
                let id = format!("e{i}");
                let got = kb.get_entry(&EntryId(id.clone()));
                match (got, model.get(&id)) {
                    (None, None) => {}
                    (Some(e), Some((k, v, s, c))) => ensure!(
                        &e.key == k && &e.value == v && e.source_kind == *s && e.category.top_level() == Some(c),
                        "op {step}: get {id} returned {e:?}, model has {k} {v} {s} {c}"
                    ),
                    (g, m) => return Err(format!("op {step}: get {id}: store {g:?}, model {m:?}")),
                }
            }
            KbOp::Delete(i) => {
                let id = format!("e{i}");
                let removed = kb.delete_entry(&EntryId(id.clone()));
                ensure!(removed == model.remove(&id).is_some(), "op {step}: delete {id} returned {removed}");
            }
        }
        ensure!(kb.len() == model.len(), "op {step}: store has {} entries, model {}", kb.len(), model.len());
    }
    Ok((kb, model))
}

pub const SOURCE_COUNTS: [(SourceKind, usize); 6] = [
    (SourceKind::ArxivPaper, 20_384),
    (SourceKind::Wikipedia, 3_620),
    (SourceKind::Textbook, 1_930),
    (SourceKind::DatasetSupport, 10_473),
    (SourceKind::Formula, 57),
    (SourceKind::GeneratedExample, 2_005),
];

pub fn check_manifest() -> Result<(), String> {
    let m = KbManifest::load(&fixtures().join("kb/manifest.json")).map_err(|e| e.to_string())?;
    let stats = m.stats();
    for (kind, n) in SOURCE_COUNTS {
        ensure!(stats.per_source[&kind] == n, "{kind}: {} instead of {n}", stats.per_source[&kind]);
    }
    let sum: usize = SOURCE_COUNTS.iter().map(|(_, n)| n).sum();
    ensure!(sum == 38_469 && stats.total == 38_469 && m.is_consistent(), "total {} sum {sum}", stats.total);
    Ok(())
}

pub fn check_kb(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ops = random_ops(&mut rng, 1000);
    let (kb, model) = run_kb_model(&ops)?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    kb.save(dir.path()).map_err(|e| e.to_string())?;
    let loaded = KnowledgeBase::load(dir.path()).map_err(|e| e.to_string())?;
    ensure!(loaded.stats() == kb.stats(), "stats changed across save/load");
    ensure!(
        loaded.entries().eq(kb.entries()),
        "entries changed across save/load"
    );
    check_manifest()?;
    Ok(format!("1000 ops agree with the model ({} live entries); round-trip and 38,469 manifest ok", model.len()))
}

// ---------------------------------------------------------------------------
// Executor

/// Replies drawn at random from well-formed, malformed and failing turns.
pub struct RandomProvider {
    rng: Mutex<ChaCha8Rng>,
}

impl RandomProvider {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed)),
        }
    }
}

impl LlmProvider for RandomProvider {
    fn complete(&self, _: &ProviderRequest) -> Result<String, LlmError> {
        let mut rng = self.rng.lock().unwrap();
        Ok(match rng.gen_range(0..100) {
            0..=24 => "Thought: look it up\nAction: echo\nAction Input: {\"text\": \"density of copper\"}".into(),
            25..=49 => {
                let n = rng.gen_range(1..=6);
                let subs: Vec<String> = (0..n).map(|i| format!("part {i}")).collect();
                format!("Thought: split it\nAction: decompose\nAction Input: {}", json!(subs))
            }
            50..=62 => "Thought: done\nFinal Answer: 42".into(),
            63..=72 => "Thought: try another\nAction: forbidden\nAction Input: {}".into(),
            73..=82 => "I am not sure what to do here.".into(),
            83..=90 => "Thought: both\nAction: echo\nAction Input: {\"text\": \"x\"}\nFinal Answer: 1".into(),
            91..=98 => "Thought: bad input\nAction: echo\nAction Input: [1, 2".into(),
            _ => return Err(LlmError::Remote("simulated outage".into())),
        })
    }

    fn name(&self) -> &str {
        "random"
    }
}

pub fn echo_registry() -> ToolRegistry {
    let mut r = ToolRegistry::new();
    let spec = |name: &str| ToolSpec {
        name: name.into(),
        params: vec![ParamSpec::required("text", ParamType::Text, "text to echo")],
        returns: ParamType::Text,
        metadata: "Echo the input back".into(),
        kind: ToolKind::General,
        timeout_secs: None,
        handler: None,
    };
    r.register_tool(spec("echo"), Arc::new(|a: &Args| Ok(a["text"].clone()))).unwrap();
    r.register_tool(spec("forbidden"), Arc::new(|_: &Args| Ok(json!("must not run")))).unwrap();
    r
}

/// Structural limits and classification of one executor trace tree.
pub fn check_trace_limits(trace: &ExecutorTrace, cfg: &AgentConfig) -> Result<(), String> {
    ensure!(trace.nesting() <= cfg.max_depth, "nesting {} > {}", trace.nesting(), cfg.max_depth);
    let mut problem = None;
    trace.walk(&mut |t| {
        if problem.is_some() {
            return;
        }
        let last = t.steps.last();
        let consistent = match t.terminated_by {
            TerminatedBy::FinalAnswer => last.is_some_and(|s| s.action == ACTION_FINAL),
            TerminatedBy::MaxIterations => t.steps.len() == cfg.max_iterations,
            TerminatedBy::ProviderError => t.error.is_some(),
        };
        if t.steps.len() > cfg.max_iterations {
            problem = Some(format!("{} steps at depth {}", t.steps.len(), t.depth));
        } else if t.depth > cfg.max_depth {
            problem = Some(format!("trace at depth {}", t.depth));
        } else if !consistent {
            problem = Some(format!("{:?} does not match the trace at depth {}", t.terminated_by, t.depth));
        } else if let Some(s) = t
            .steps
            .iter()
            .find(|s| s.subtraces.len() > cfg.max_subquestions || (s.action != ACTION_DECOMPOSE && !s.subtraces.is_empty()))
        {
            problem = Some(format!("step `{}` has {} subtraces", s.action, s.subtraces.len()));
        } else if t.steps.iter().any(|s| s.action == "forbidden" && s.invoked) {
            problem = Some("unselected tool was invoked".into());
        }
    });
    problem.map_or(Ok(()), Err)
}

pub fn fuzz_executor(seed: u64) -> Result<TerminatedBy, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = AgentConfig {
        max_iterations: rng.gen_range(1..=6),
        max_depth: rng.gen_range(0..=2),
        max_subquestions: rng.gen_range(1..=3),
        ..AgentConfig::default()
    };
    let gateway = LlmGateway::new(Arc::new(RandomProvider::new(seed)));
    let registry = echo_registry();
    let retriever = Retriever::new(RetrieverConfig::default(), Arc::new(HashEmbedder::default()))
        .and_then(|r| r.with_tools(&registry))
        .map_err(|e| e.to_string())?;
    let agent = Agent::new(&gateway, &retriever, &registry, cfg);
    let assessment = Assessment {
        query: "fuzz".into(),
        selected_tools: vec!["echo".into()],
        rationale: String::new(),
        diagnostics: Vec::new(),
    };
    let trace = agent.execute("fuzz", &assessment);
    check_trace_limits(&trace, &cfg).map_err(|e| format!("seed {seed}: {e}"))?;
    Ok(trace.terminated_by)
}

pub fn check_executor_fuzz(base: u64) -> Check {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for seed in base..base + 100 {
        let t = fuzz_executor(seed)?;
        *counts.entry(format!("{t:?}")).or_default() += 1;
    }
    Ok(format!("100 runs within limits; terminated_by {counts:?}"))
}

// ---------------------------------------------------------------------------
// Pipeline

pub fn golden_query() -> String {
    fs::read_to_string(fixtures().join("golden/ask_query.txt"))
        .expect("golden query fixture")
        .trim()
        .to_owned()
}

/// One `ask` run with the fixture config, serialized as a JSONL trace.
pub fn fixture_ask_trace() -> Result<String, String> {
    let cfg = Config::load(&fixtures().join("config/honeycomb.toml")).map_err(|e| e.to_string())?;
    let kb = KnowledgeBase::load(cfg.kb.as_deref().ok_or("config has no kb")?).map_err(|e| e.to_string())?;
    let provider = cfg.provider().map_err(|e| e.to_string())?;
    let ablation = cfg.ablation().map_err(|e| e.to_string())?;
    let session = Session::build(&cfg, &provider, kb).map_err(|e| e.to_string())?;
    let answer = session.agent().answer(&golden_query(), ablation).map_err(|e| e.to_string())?;
    Ok(write_trace(&answer))
}

pub fn check_golden_trace() -> Check {
    let golden = fs::read_to_string(fixtures().join("golden/ask_trace.jsonl")).map_err(|e| e.to_string())?;
    for run in 1..=3 {
        let trace = fixture_ask_trace()?;
        ensure!(trace == golden, "run {run} differs from the golden trace");
    }
    Ok(format!("3 runs byte-identical to golden ({} records)", golden.lines().count()))
}

/// Provider calls, retrieval searches and tool invocations for one answer.
pub fn gating_counters(ablation: Ablation, replies: &[&str]) -> Result<(usize, usize, usize), String> {
    let cfg = Config::load(&fixtures().join("config/honeycomb.toml")).map_err(|e| e.to_string())?;
    let kb = KnowledgeBase::load(cfg.kb.as_deref().ok_or("config has no kb")?).map_err(|e| e.to_string())?;
    let registry = build_registry(&cfg).map_err(|e| e.to_string())?;
    let retriever = Retriever::new(cfg.retriever, Arc::new(HashEmbedder::default()))
        .and_then(|r| r.with_kb(&kb))
        .and_then(|r| r.with_tools(&registry))
        .map_err(|e| e.to_string())?;
    let gateway = LlmGateway::new(Arc::new(ScriptedProvider::queue(replies.iter().copied())));
    let agent = Agent::new(&gateway, &retriever, &registry, cfg.agent);
    agent.answer(&golden_query(), ablation).map_err(|e| e.to_string())?;
    Ok((gateway.calls(), retriever.searches(), registry.invocations()))
}

pub fn check_ablation_gating() -> Check {
    let (calls, searches, tools) = gating_counters(Ablation::NONE, &["Final Answer: 20 kg/s"])?;
    ensure!(
        (calls, searches, tools) == (1, 0, 0),
        "baseline: {calls} calls, {searches} searches, {tools} tool invocations"
    );
    let (kcalls, ksearches, ktools) = gating_counters(Ablation::KB, &["Final Answer: 20 kg/s"])?;
    ensure!(ktools == 0, "kb only: {ktools} tool invocations");
    ensure!(kcalls == 1 && ksearches == 2, "kb only: {kcalls} calls, {ksearches} searches");
    Ok(format!(
        "none: {calls} call, {searches} retrievals; kb: {ktools} tool invocations ({ksearches} searches)"
    ))
}

// ---------------------------------------------------------------------------
// Published arithmetic

pub fn check_deltas() -> Check {
    let table = |name: &str, accs: [f64; 4]| {
        let reports: Vec<EvalReport> = [Ablation::NONE, Ablation::TOOLS, Ablation::KB, Ablation::FULL]
            .into_iter()
            .zip(accs)
            .map(|(a, acc)| EvalReport::published(name, a, acc))
            .collect();
        ablation_report(&reports).map_err(|e| e.to_string())
    };
    let mascqa = table("MaScQA", [61.38, 73.23, 78.31, 79.07])?;
    let sciqa = table("SciQA", [90.84, 96.34, 85.57, 96.56])?;
    let got = [
        mascqa.delta(Ablation::KB, Ablation::FULL),
        mascqa.delta(Ablation::TOOLS, Ablation::FULL),
        sciqa.delta(Ablation::KB, Ablation::FULL),
        sciqa.delta(Ablation::TOOLS, Ablation::FULL),
        Some(improvement(16.62, 33.38)),
        Some(improvement(58.46, 79.07)),
        Some(improvement(33.96, 79.69)),
    ];
    let want = [0.76, 5.84, 10.99, 0.22, 16.76, 20.61, 45.73];
    for (g, w) in got.iter().zip(want) {
        ensure!(*g == Some(w), "expected {w}, got {g:?}");
    }
    Ok("0.76 5.84 10.99 0.22 16.76 20.61 45.73 reproduced".into())
}

// ---------------------------------------------------------------------------
// Tool construction

/// Records every prompt before forwarding to an inner provider.
pub struct PromptLog {
    inner: ScriptedProvider,
    pub prompts: Mutex<Vec<String>>,
}

impl PromptLog {
    pub fn new(inner: ScriptedProvider) -> Self {
        Self {
            inner,
            prompts: Mutex::new(Vec::new()),
        }
    }
}

impl LlmProvider for PromptLog {
    fn complete(&self, request: &ProviderRequest) -> Result<String, LlmError> {
        self.prompts.lock().unwrap().push(request.prompt.clone());
        self.inner.complete(request)
    }

    fn name(&self) -> &str {
        "prompt-log"
    }
}

pub struct ItcRun {
    pub atoms: Vec<AtomicFunction>,
    pub audit: AuditLog,
    pub decompose_prompts: Vec<String>,
}

/// Generate, review and decompose the fixture questions.
pub fn run_itc_fixture() -> Result<ItcRun, String> {
    let dir = fixtures().join("itc");
    let data = Dataset::parse("itc", &fs::read_to_string(dir.join("questions.jsonl")).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let generator = LlmGateway::new(Arc::new(
        ScriptedProvider::from_file(&dir.join("generate_script.json")).map_err(|e| e.to_string())?,
    ));
    let mut functions = data
        .records
        .iter()
        .map(|q| generate_function(&generator, &q.id, &q.text))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let verdicts = parse_review(&fs::read_to_string(dir.join("verdicts.jsonl")).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let outcome = apply_review(&mut functions, &verdicts);
    ensure!(
        outcome.approved.len() == 2 && outcome.rejected.len() == 1,
        "review outcome {outcome:?}"
    );

    let log = Arc::new(PromptLog::new(
        ScriptedProvider::from_file(&dir.join("decompose_script.json")).map_err(|e| e.to_string())?,
    ));
    let decomposer = LlmGateway::new(log.clone());
    let mut audit = AuditLog::default();
    let mut atoms = Vec::new();
    for f in &functions {
        if let Ok(a) = decompose_function(&decomposer, f, &mut audit) {
            atoms = merge_atoms(&atoms, &a);
        }
    }
    let decompose_prompts = log.prompts.lock().unwrap().clone();
    Ok(ItcRun {
        atoms,
        audit,
        decompose_prompts,
    })
}

pub fn check_itc() -> Check {
    let run = run_itc_fixture()?;
    let names: Vec<&str> = run.atoms.iter().map(|a| a.name.as_str()).collect();
    ensure!(run.atoms.len() == 3, "|A| = {} ({names:?})", run.atoms.len());
    let shared = run
        .atoms
        .iter()
        .find(|a| a.name == "mass_flow_rate")
        .ok_or("mass_flow_rate missing")?;
    ensure!(shared.provenance.len() == 2, "shared atom provenance {:?}", shared.provenance);
    ensure!(merge_atoms(&run.atoms, &run.atoms) == run.atoms, "merge(A, A) != A");
    ensure!(merge_atoms(&[], &run.atoms) == run.atoms, "merge(empty, A) != A");

    let reached = run.audit.decomposed_ids();
    ensure!(reached == ["fn-c1", "fn-c2"], "decomposition reached {reached:?}");
    ensure!(
        run.audit
            .events
            .iter()
            .all(|e| e.status == FunctionStatus::Approved || e.outcome == honeycomb_core::itc::AuditOutcome::Refused),
        "a non-approved function was not refused"
    );
    ensure!(
        run.decompose_prompts.len() == 2 && run.decompose_prompts.iter().all(|p| !p.contains("fn-c3")),
        "rejected function reached the model"
    );
    Ok(format!("|A| = 3 {names:?}; merge idempotent; fn-c3 refused without a model call"))
}

// ---------------------------------------------------------------------------
// Grading

fn records() -> Vec<honeycomb_core::eval::QuestionRecord> {
    let text = fs::read_to_string(fixtures().join("datasets/mascqa_sample.jsonl")).expect("dataset fixture");
    Dataset::parse("sample", &text).expect("dataset parses").records
}

const FRAGMENTS: [&str; 24] = [
    "Final Answer:", "final answer", "(A)", "B", "C.", "D)", "-", "e", "1e999", "-0", "NaN", "inf", "P-1", "Q->3",
    "R: 2", ",", "\n", "  ", "\u{2013}", "\u{00e9}", "ünïcödé", "42.5", "7700", "..",
];

pub fn fuzz_prediction(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(0..12);
    let mut s = String::new();
    for _ in 0..n {
        if rng.gen_bool(0.7) {
            s.push_str(FRAGMENTS.choose(rng).unwrap());
        } else {
            let len = rng.gen_range(0..6);
            s.extend((0..len).map(|_| char::from_u32(rng.gen_range(0..0x3000)).unwrap_or('?')));
        }
    }
    s
}

pub fn check_grading(seed: u64) -> Check {
    let records = records();
    let cfg = GradeConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut correct = 0;
    for i in 0..10_000 {
        let pred = fuzz_prediction(&mut rng);
        let record = &records[i % records.len()];
        let g = catch_unwind(AssertUnwindSafe(|| grade(&pred, record, cfg)))
            .map_err(|_| format!("grade panicked on {pred:?} for {}", record.id))?;
        correct += usize::from(g.correct);
    }

    let by_id: HashMap<&str, _> = records.iter().map(|r| (r.id.as_str(), r)).collect();
    // Gold 20 and 7700; rel_tol 0.01 puts the edges at 20.2 and 7777.
    let cases = [
        ("mq05", "Final Answer: 20.2", true),
        ("mq05", "Final Answer: 19.8", true),
        ("mq05", "Final Answer: 20.2001", false),
        ("mq05", "Final Answer: 19.7999", false),
        ("mq06", "Final Answer: 7777", true),
        ("mq06", "Final Answer: 7777.01", false),
        ("mq06", "Final Answer: 7622.99", false),
    ];
    for (id, pred, want) in cases {
        let got = grade(pred, by_id[id], cfg).correct;
        ensure!(got == want, "{id} {pred:?}: graded {got}, expected {want}");
    }
    Ok(format!("10000 fuzzed predictions graded without panic ({correct} correct); 7 boundary cases ok"))
}
