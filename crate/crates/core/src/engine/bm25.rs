//! In-memory BM25 over an inverted index.
//!
//! Scoring uses the Lucene idf `ln(1 + (N - df + 0.5) / (df + 0.5))` with
//! defaults `k1 = 0.9`, `b = 0.4`. Query terms are deduplicated; terms that
//! occur in no indexed document contribute nothing.

use std::collections::HashMap;
use std::sync::Arc;

use async_trait::async_trait;

use super::text::{tokenize, unique_terms};
use super::{check_candidates, BatchResult, Candidate, Engine, ScoreRequest};
use crate::error::{Error, Result};
use crate::model::{Capability, CapabilitySet, Query, ScoredList};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 0.9, b: 0.4 }
    }
}

impl Bm25Params {
    pub fn new(k1: f64, b: f64) -> Result<Self> {
        if !(k1.is_finite() && k1 > 0.0) {
            return Err(Error::Config(format!("bm25 k1 must be > 0, got {k1}")));
        }
        if !(0.0..=1.0).contains(&b) {
            return Err(Error::Config(format!("bm25 b must be in [0, 1], got {b}")));
        }
        Ok(Self { k1, b })
    }
}

#[derive(Debug, Clone)]
pub struct Bm25Index {
    params: Bm25Params,
    /// term -> (internal doc id, term frequency), sorted by doc id
    postings: HashMap<String, Vec<(u32, u32)>>,
    doc_lengths: Vec<u32>,
    avg_doc_length: f64,
    doc_ids: Vec<String>,
}

impl Bm25Index {
    pub fn build<I, S, T>(docs: I, params: Bm25Params) -> Result<Self>
    where
        I: IntoIterator<Item = (S, T)>,
        S: Into<String>,
        T: AsRef<str>,
    {
        let mut postings: HashMap<String, Vec<(u32, u32)>> = HashMap::new();
        let mut doc_lengths = Vec::new();
        let mut doc_ids = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for (internal, (id, text)) in docs.into_iter().enumerate() {
            let id = id.into();
            if !seen.insert(id.clone()) {
                return Err(Error::DuplicateDocId(id));
            }
            let internal = u32::try_from(internal).map_err(|_| Error::Config("more than 2^32 documents".into()))?;
            let tokens = tokenize(text.as_ref());
            let mut tf: HashMap<String, u32> = HashMap::new();
            for t in &tokens {
                *tf.entry(t.clone()).or_default() += 1;
            }
            for (term, count) in tf {
                postings.entry(term).or_default().push((internal, count));
            }
            doc_lengths.push(tokens.len() as u32);
            doc_ids.push(id);
        }
        let total: u64 = doc_lengths.iter().map(|&l| u64::from(l)).sum();
        let avg_doc_length = if doc_lengths.is_empty() {
            0.0
        } else {
            total as f64 / doc_lengths.len() as f64
        };
        Ok(Self {
            params,
            postings,
            doc_lengths,
            avg_doc_length,
            doc_ids,
        })
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn doc_count(&self) -> usize {
        self.doc_lengths.len()
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn doc_frequency(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    pub fn doc_id(&self, internal: u32) -> &str {
        &self.doc_ids[internal as usize]
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.doc_count() as f64;
        let df = self.doc_frequency(term) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    fn term_weight(&self, idf: f64, tf: f64, doc_len: f64) -> f64 {
        let Bm25Params { k1, b } = self.params;
        let norm = 1.0 - b + b * doc_len / self.avg_doc_length;
        idf * (tf * (k1 + 1.0)) / (tf + k1 * norm)
    }

    /// BM25 of one indexed document for a query text.
    pub fn bm25_score(&self, query: &str, internal: u32) -> f64 {
        let len = f64::from(self.doc_lengths[internal as usize]);
        let mut score = 0.0;
        for term in unique_terms(query) {
            let Some(list) = self.postings.get(&term) else {
                continue;
            };
            if let Ok(i) = list.binary_search_by_key(&internal, |&(d, _)| d) {
                score += self.term_weight(self.idf(&term), f64::from(list[i].1), len);
            }
        }
        score
    }

    /// Every document sharing at least one term with the query, canonical
    /// order, truncated to `limit`.
    pub fn search(&self, query: &str, limit: usize) -> ScoredList {
        let mut acc: HashMap<u32, f64> = HashMap::new();
        // term-at-a-time; per document the summation order equals bm25_score's
        for term in unique_terms(query) {
            let Some(list) = self.postings.get(&term) else {
                continue;
            };
            let idf = self.idf(&term);
            for &(doc, tf) in list {
                let w = self.term_weight(idf, f64::from(tf), f64::from(self.doc_lengths[doc as usize]));
                *acc.entry(doc).or_insert(0.0) += w;
            }
        }
        let list = ScoredList::from_entries(acc.into_iter().map(|(d, s)| (self.doc_ids[d as usize].clone(), s)))
            .expect("index ids are unique and scores finite");
        if limit == 0 {
            return ScoredList::empty();
        }
        list.truncate(limit).expect("limit >= 1")
    }

    /// Scores arbitrary texts against this index's statistics (idf and
    /// average length); term frequencies and lengths come from the text.
    pub fn score_text(&self, query: &str, text: &str) -> f64 {
        let tokens = tokenize(text);
        let len = tokens.len() as f64;
        let mut tf: HashMap<&str, u32> = HashMap::new();
        for t in &tokens {
            *tf.entry(t.as_str()).or_default() += 1;
        }
        let mut score = 0.0;
        for term in unique_terms(query) {
            if self.doc_frequency(&term) == 0 {
                continue;
            }
            if let Some(&count) = tf.get(term.as_str()) {
                score += self.term_weight(self.idf(&term), f64::from(count), len);
            }
        }
        score
    }

    pub fn score_candidates(&self, query: &str, candidates: &[Candidate]) -> Result<ScoredList> {
        check_candidates(candidates)?;
        ScoredList::from_entries(
            candidates
                .iter()
                .map(|c| (c.doc_id.clone(), self.score_text(query, &c.text))),
        )
    }
}

/// The `bm25` engine: Search over its index, and Score of arbitrary
/// candidates using the index statistics.
pub struct Bm25Engine {
    name: String,
    index: Arc<Bm25Index>,
}

impl Bm25Engine {
    pub fn new(name: impl Into<String>, index: Bm25Index) -> Self {
        Self {
            name: name.into(),
            index: Arc::new(index),
        }
    }

    pub fn index(&self) -> &Bm25Index {
        &self.index
    }
}

#[async_trait]
impl Engine for Bm25Engine {
    fn name(&self) -> &str {
        &self.name
    }

    fn capabilities(&self) -> CapabilitySet {
        CapabilitySet::new([Capability::Search, Capability::Score])
    }

    async fn search_batch(&self, queries: &[Query]) -> BatchResult<ScoredList> {
        let index = self.index.clone();
        let queries = queries.to_vec();
        // index scans are CPU-bound; keep them off the request-handling threads
        tokio::task::spawn_blocking(move || {
            queries
                .iter()
                .map(|q| Ok(index.search(q.text(), q.limit())))
                .collect()
        })
        .await
        .map_err(|e| Error::EngineFailure(e.to_string()))
    }

    async fn score_batch(&self, requests: &[ScoreRequest]) -> BatchResult<ScoredList> {
        let index = self.index.clone();
        let requests = requests.to_vec();
        tokio::task::spawn_blocking(move || {
            requests
                .iter()
                .map(|r| index.score_candidates(r.query.text(), &r.candidates))
                .collect()
        })
        .await
        .map_err(|e| Error::EngineFailure(e.to_string()))
    }
}
