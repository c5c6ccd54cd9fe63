use async_trait::async_trait;

use super::bm25::{Bm25Index, Bm25Params};
use super::{check_candidates, BatchResult, Candidate, Engine, ScoreRequest};
use crate::error::Result;
use crate::model::{Capability, CapabilitySet, Query, ScoredList};

/// The `lexical-rerank` engine. Scores candidates with BM25 using statistics
/// of the candidate set itself, so it needs no index of its own.
pub struct LexicalReranker {
    name: String,
    params: Bm25Params,
}

impl LexicalReranker {
    pub fn new(name: impl Into<String>, params: Bm25Params) -> Self {
        Self {
            name: name.into(),
            params,
        }
    }

    pub fn rerank(&self, query: &Query, candidates: &[Candidate]) -> Result<ScoredList> {
        check_candidates(candidates)?;
        let index = Bm25Index::build(
            candidates.iter().map(|c| (c.doc_id.clone(), c.text.as_str())),
            self.params,
        )?;
        ScoredList::from_entries((0..candidates.len() as u32).map(|i| {
            (index.doc_id(i).to_string(), index.bm25_score(query.text(), i))
        }))
    }
}

#[async_trait]
impl Engine for LexicalReranker {
    fn name(&self) -> &str {
        &self.name
    }

    fn capabilities(&self) -> CapabilitySet {
        CapabilitySet::new([Capability::Score])
    }

    async fn score_batch(&self, requests: &[ScoreRequest]) -> BatchResult<ScoredList> {
        Ok(requests
            .iter()
            .map(|r| self.rerank(&r.query, &r.candidates))
            .collect())
    }
}
