//! Engines: the things that actually retrieve, score, rewrite and fuse.
//!
//! Every entry point is batch-first. An engine declares the capabilities it
//! serves; calling an undeclared entry point yields [`Error::Unsupported`].
//!
//! Batch entry points return a nested result: the outer `Err` fails the whole
//! batch, the inner per-item `Result` lets engines such as the relay fail one
//! query without touching its neighbours.

mod bm25;
mod registry;
mod rerank;
mod rewrite;
mod rrf;
pub mod text;

use async_trait::async_trait;

pub use bm25::{Bm25Engine, Bm25Index, Bm25Params};
pub use registry::{EngineContext, EngineFactory, EngineRegistry};
pub use rerank::LexicalReranker;
pub use rewrite::VariantRewriter;
pub use rrf::{reciprocal_rank_fusion, RrfEngine, DEFAULT_RRF_K};

use crate::error::{Error, Result};
use crate::model::{Capability, CapabilitySet, Query, ScoredList};

pub type BatchResult<T> = Result<Vec<Result<T>>>;

/// A document handed to a Score engine.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub doc_id: String,
    pub text: String,
}

impl Candidate {
    pub fn new(doc_id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            doc_id: doc_id.into(),
            text: text.into(),
        }
    }
}

/// One reranking job: rank `candidates` for `query`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRequest {
    pub query: Query,
    pub candidates: Vec<Candidate>,
}

#[async_trait]
pub trait Engine: Send + Sync {
    fn name(&self) -> &str;

    fn capabilities(&self) -> CapabilitySet;

    /// Results come back in input order; result `i` is canonical, holds at
    /// most `queries[i].limit()` entries and does not depend on the rest of
    /// the batch.
    async fn search_batch(&self, queries: &[Query]) -> BatchResult<ScoredList> {
        let _ = queries;
        Err(self.unsupported(Capability::Search))
    }

    /// Ranks each request's candidates. Output ids are exactly the input ids.
    async fn score_batch(&self, requests: &[ScoreRequest]) -> BatchResult<ScoredList> {
        let _ = requests;
        Err(self.unsupported(Capability::Score))
    }

    /// Up to `n` distinct variants of `query`, the original first.
    async fn rewrite(&self, query: &Query, n: usize) -> Result<Vec<Query>> {
        let _ = (query, n);
        Err(self.unsupported(Capability::Rewrite))
    }

    async fn fuse(&self, lists: &[ScoredList]) -> Result<ScoredList> {
        let _ = lists;
        Err(self.unsupported(Capability::Fuse))
    }

    /// Whether the processor may hand this engine a new batch while an
    /// earlier one is still running. Only engines that merely forward work
    /// elsewhere (the relay) should say yes.
    fn overlapping_batches(&self) -> bool {
        false
    }

    fn unsupported(&self, capability: Capability) -> Error {
        Error::Unsupported {
            service: self.name().to_string(),
            capability,
        }
    }
}

/// Checks a candidate set for the preconditions every Score engine shares.
pub(crate) fn check_candidates(candidates: &[Candidate]) -> Result<()> {
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let mut seen = std::collections::HashSet::new();
    for c in candidates {
        if !seen.insert(c.doc_id.as_str()) {
            return Err(Error::DuplicateDocId(c.doc_id.clone()));
        }
    }
    Ok(())
}
