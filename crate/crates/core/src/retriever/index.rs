use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};

use super::{tokenize, Document, RetrievalHit, RetrieverError, Stage, TargetKind};

/// Okapi BM25 parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

/// `ln((D - df + 0.5) / (df + 0.5) + 1)`, floored at zero.
pub fn idf(num_docs: usize, doc_freq: usize) -> f64 {
    let d = num_docs as f64;
    let df = doc_freq as f64;
    ((d - df + 0.5) / (df + 0.5) + 1.0).ln().max(0.0)
}

#[derive(Debug, Clone)]
struct IndexedDoc {
    id: String,
    kind: TargetKind,
    text: String,
    len: usize,
}

/// Immutable inverted index over a fixed document set.
#[derive(Debug, Clone)]
pub struct LexicalIndex {
    docs: Vec<IndexedDoc>,
    term_freqs: Vec<HashMap<String, u32>>,
    postings: HashMap<String, Vec<(usize, u32)>>,
    avg_len: f64,
}

impl LexicalIndex {
    pub fn build(documents: impl IntoIterator<Item = Document>) -> Result<Self, RetrieverError> {
        let mut docs = Vec::new();
        let mut term_freqs = Vec::new();
        let mut postings: HashMap<String, Vec<(usize, u32)>> = HashMap::new();
        let mut seen = HashSet::new();

        for (idx, doc) in documents.into_iter().enumerate() {
            if !seen.insert(doc.id.clone()) {
                return Err(RetrieverError::DuplicateDocument(doc.id));
            }
            let tokens = tokenize(&doc.text);
            let mut tf: HashMap<String, u32> = HashMap::new();
            for t in &tokens {
                *tf.entry(t.clone()).or_default() += 1;
            }
            for (term, &count) in &tf {
                postings.entry(term.clone()).or_default().push((idx, count));
            }
            docs.push(IndexedDoc {
                id: doc.id,
                kind: doc.kind,
                text: doc.text,
                len: tokens.len(),
            });
            term_freqs.push(tf);
        }
        if docs.is_empty() {
            return Err(RetrieverError::EmptyCorpus);
        }
        let avg_len = docs.iter().map(|d| d.len as f64).sum::<f64>() / docs.len() as f64;
        Ok(Self {
            docs,
            term_freqs,
            postings,
            avg_len,
        })
    }

    pub fn num_docs(&self) -> usize {
        self.docs.len()
    }

    pub fn avg_len(&self) -> f64 {
        self.avg_len
    }

    pub fn doc_len(&self, id: &str) -> Option<usize> {
        self.position(id).map(|i| self.docs[i].len)
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    pub fn term_freq(&self, id: &str, term: &str) -> u32 {
        self.position(id)
            .and_then(|i| self.term_freqs[i].get(term).copied())
            .unwrap_or(0)
    }

    pub fn text(&self, id: &str) -> Option<&str> {
        self.position(id).map(|i| self.docs[i].text.as_str())
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.docs.iter().map(|d| d.id.as_str())
    }

    fn position(&self, id: &str) -> Option<usize> {
        self.docs.iter().position(|d| d.id == id)
    }

    /// Score every document sharing at least one term with `query` and
    /// return the best `n`. Repeated query terms contribute once per
    /// occurrence.
    pub fn bm25_search(&self, query: &str, n: usize, params: Bm25Params) -> Vec<RetrievalHit> {
        let total = self.docs.len();
        let mut scores: HashMap<usize, f64> = HashMap::new();
        for term in tokenize(query) {
            let Some(list) = self.postings.get(&term) else {
                continue;
            };
            let weight = idf(total, list.len());
            for &(doc, tf) in list {
                let tf = tf as f64;
                let norm = 1.0 - params.b + params.b * self.docs[doc].len as f64 / self.avg_len;
                *scores.entry(doc).or_default() +=
                    weight * tf * (params.k1 + 1.0) / (tf + params.k1 * norm);
            }
        }
        let hits = scores
            .into_iter()
            .map(|(doc, score)| RetrievalHit {
                target_id: self.docs[doc].id.clone(),
                target_kind: self.docs[doc].kind,
                stage: Stage::Lexical,
                score,
            })
            .collect();
        top_n(hits, n)
    }
}

/// Sort by descending score, ties by ascending id, and keep `n`.
pub(crate) fn top_n(mut hits: Vec<RetrievalHit>, n: usize) -> Vec<RetrievalHit> {
    hits.sort_by(hit_order);
    hits.truncate(n);
    hits
}

pub(crate) fn hit_order(a: &RetrievalHit, b: &RetrievalHit) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.target_id.cmp(&b.target_id))
}
