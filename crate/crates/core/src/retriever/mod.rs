//! Two-stage retrieval: BM25 candidate generation, then embedding-based
//! reranking down to a small final set.

mod embed;
mod index;

use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::knowledge_base::KnowledgeBase;
use crate::tool_hub::ToolRegistry;

pub use embed::{cosine, EmbeddingError, EmbeddingProvider, HashEmbedder, RemoteEmbedder};
pub use index::{idf, Bm25Params, LexicalIndex};

#[derive(Debug, Error)]
pub enum RetrieverError {
    #[error("cannot build an index over an empty document set")]
    EmptyCorpus,
    #[error("duplicate document id `{0}`")]
    DuplicateDocument(String),
    #[error("invalid retriever config: {0}")]
    InvalidConfig(String),
    #[error("reranking failed: {0}")]
    Embedding(#[from] EmbeddingError),
}

/// Lowercase, split on runs of non-alphanumeric characters, drop empties.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    KbEntry,
    Tool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Lexical,
    Reranked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalHit {
    pub target_id: String,
    pub target_kind: TargetKind,
    pub stage: Stage,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub kind: TargetKind,
    pub text: String,
}

impl Document {
    pub fn new(id: impl Into<String>, kind: TargetKind, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            kind,
            text: text.into(),
        }
    }
}

/// KB entries index key and value together.
pub fn kb_documents(kb: &KnowledgeBase) -> Vec<Document> {
    kb.entries()
        .map(|e| Document::new(e.id.as_str(), TargetKind::KbEntry, e.indexable_text()))
        .collect()
}

/// Tools index their rendered signature and metadata description.
pub fn tool_documents(registry: &ToolRegistry) -> Vec<Document> {
    registry
        .specs()
        .map(|spec| Document::new(spec.name.clone(), TargetKind::Tool, spec.describe()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrieverConfig {
    pub n_first_stage: usize,
    pub k_final: usize,
    pub k1: f64,
    pub b: f64,
}

impl Default for RetrieverConfig {
    fn default() -> Self {
        Self {
            n_first_stage: 50,
            k_final: 3,
            k1: 1.2,
            b: 0.75,
        }
    }
}

impl RetrieverConfig {
    pub fn validate(&self) -> Result<(), RetrieverError> {
        let fail = |m: &str| Err(RetrieverError::InvalidConfig(m.to_owned()));
        if self.n_first_stage == 0 || self.k_final == 0 {
            return fail("n_first_stage and k_final must be positive");
        }
        if self.k_final > self.n_first_stage {
            return fail("k_final must not exceed n_first_stage");
        }
        if self.k1.is_nan() || self.k1 <= 0.0 {
            return fail("k1 must be positive");
        }
        if !(0.0..=1.0).contains(&self.b) {
            return fail("b must lie in [0, 1]");
        }
        Ok(())
    }

    pub fn bm25(&self) -> Bm25Params {
        Bm25Params {
            k1: self.k1,
            b: self.b,
        }
    }
}

/// Cosine similarity of each text to the query under `provider`.
pub fn cosine_scores(
    provider: &dyn EmbeddingProvider,
    query: &str,
    texts: &[&str],
) -> Result<Vec<f64>, RetrieverError> {
    let q = provider.embed(query)?;
    texts
        .iter()
        .map(|t| Ok(cosine(&q, &provider.embed(t)?)))
        .collect()
}

/// Rescore `hits` by embedding cosine against the query and keep the best `k`.
/// Hits whose text `index` does not know are scored against empty text.
pub fn rerank(
    provider: &dyn EmbeddingProvider,
    index: &LexicalIndex,
    query: &str,
    hits: &[RetrievalHit],
    k: usize,
) -> Result<Vec<RetrievalHit>, RetrieverError> {
    let texts: Vec<&str> = hits
        .iter()
        .map(|h| index.text(&h.target_id).unwrap_or(""))
        .collect();
    let scores = cosine_scores(provider, query, &texts)?;
    let reranked = hits
        .iter()
        .zip(scores)
        .map(|(h, score)| RetrievalHit {
            target_id: h.target_id.clone(),
            target_kind: h.target_kind,
            stage: Stage::Reranked,
            score,
        })
        .collect();
    Ok(index::top_n(reranked, k))
}

/// Which indexes a retrieval consults.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Sources {
    pub kb: bool,
    pub tools: bool,
}

impl Sources {
    pub const NONE: Sources = Sources { kb: false, tools: false };
    pub const KB: Sources = Sources { kb: true, tools: false };
    pub const TOOLS: Sources = Sources { kb: false, tools: true };
    pub const ALL: Sources = Sources { kb: true, tools: true };
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RetrievedContext {
    pub kb_hits: Vec<RetrievalHit>,
    pub tool_hits: Vec<RetrievalHit>,
}

/// Holds the lexical indexes for one KB snapshot and tool registry.
pub struct Retriever {
    config: RetrieverConfig,
    embedder: Arc<dyn EmbeddingProvider>,
    kb_index: Option<LexicalIndex>,
    tool_index: Option<LexicalIndex>,
    searches: AtomicUsize,
}

impl fmt::Debug for Retriever {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Retriever")
            .field("config", &self.config)
            .field("embedder", &self.embedder.name())
            .field("kb_docs", &self.kb_index.as_ref().map(LexicalIndex::num_docs))
            .field("tool_docs", &self.tool_index.as_ref().map(LexicalIndex::num_docs))
            .finish()
    }
}

impl Retriever {
    pub fn new(config: RetrieverConfig, embedder: Arc<dyn EmbeddingProvider>) -> Result<Self, RetrieverError> {
        config.validate()?;
        Ok(Self {
            config,
            embedder,
            kb_index: None,
            tool_index: None,
            searches: AtomicUsize::new(0),
        })
    }

    /// Index a KB snapshot. An empty KB leaves the KB source without an index.
    pub fn with_kb(mut self, kb: &KnowledgeBase) -> Result<Self, RetrieverError> {
        self.kb_index = index_or_none(kb_documents(kb))?;
        Ok(self)
    }

    pub fn with_tools(mut self, registry: &ToolRegistry) -> Result<Self, RetrieverError> {
        self.tool_index = index_or_none(tool_documents(registry))?;
        Ok(self)
    }

    pub fn config(&self) -> &RetrieverConfig {
        &self.config
    }

    pub fn embedder(&self) -> &dyn EmbeddingProvider {
        self.embedder.as_ref()
    }

    pub fn kb_index(&self) -> Option<&LexicalIndex> {
        self.kb_index.as_ref()
    }

    pub fn tool_index(&self) -> Option<&LexicalIndex> {
        self.tool_index.as_ref()
    }

    /// Number of per-source searches performed so far.
    pub fn searches(&self) -> usize {
        self.searches.load(Ordering::SeqCst)
    }

    pub fn kb_text(&self, id: &str) -> Option<&str> {
        self.kb_index.as_ref().and_then(|i| i.text(id))
    }

    pub fn retrieve_context(&self, query: &str, sources: Sources) -> Result<RetrievedContext, RetrieverError> {
        let mut ctx = RetrievedContext::default();
        if sources.kb {
            ctx.kb_hits = self.search_source(self.kb_index.as_ref(), query)?;
        }
        if sources.tools {
            ctx.tool_hits = self.search_source(self.tool_index.as_ref(), query)?;
        }
        Ok(ctx)
    }

    /// Rank `texts` against the query by embedding cosine and keep the best
    /// `k_final` as (position, score). Equal scores keep input order.
    pub fn consolidate(&self, query: &str, texts: &[&str]) -> Result<Vec<(usize, f64)>, RetrieverError> {
        self.searches.fetch_add(1, Ordering::SeqCst);
        let scores = cosine_scores(self.embedder.as_ref(), query, texts)?;
        let mut ranked: Vec<(usize, f64)> = scores.into_iter().enumerate().collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        ranked.truncate(self.config.k_final);
        Ok(ranked)
    }

    fn search_source(&self, index: Option<&LexicalIndex>, query: &str) -> Result<Vec<RetrievalHit>, RetrieverError> {
        self.searches.fetch_add(1, Ordering::SeqCst);
        let Some(index) = index else {
            return Ok(Vec::new());
        };
        let lexical = index.bm25_search(query, self.config.n_first_stage, self.config.bm25());
        if lexical.is_empty() {
            return Ok(lexical);
        }
        rerank(self.embedder.as_ref(), index, query, &lexical, self.config.k_final)
    }
}

fn index_or_none(docs: Vec<Document>) -> Result<Option<LexicalIndex>, RetrieverError> {
    if docs.is_empty() {
        Ok(None)
    } else {
        LexicalIndex::build(docs).map(Some)
    }
}
