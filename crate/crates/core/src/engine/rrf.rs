//! Reciprocal rank fusion: `score(d) = Σ 1 / (k + rank_d)` over the input
//! lists containing `d`, with 1-based ranks.

use std::collections::HashMap;

use async_trait::async_trait;

use super::Engine;
use crate::error::{Error, Result};
use crate::model::{Capability, CapabilitySet, ScoredList};

pub const DEFAULT_RRF_K: f64 = 60.0;

/// Fuses canonical lists.
///
/// Each document's contributions are summed from its best rank to its worst,
/// so the result does not depend on the order the lists are supplied in.
pub fn reciprocal_rank_fusion(lists: &[ScoredList], k: f64) -> Result<ScoredList> {
    if lists.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut ranks: HashMap<&str, Vec<usize>> = HashMap::new();
    for list in lists {
        for (i, id) in list.doc_ids().enumerate() {
            ranks.entry(id).or_default().push(i + 1);
        }
    }
    ScoredList::from_entries(ranks.into_iter().map(|(id, mut rs)| {
        rs.sort_unstable();
        let score = rs.iter().map(|&r| 1.0 / (k + r as f64)).sum::<f64>();
        (id.to_string(), score)
    }))
}

pub struct RrfEngine {
    name: String,
    k: f64,
}

impl RrfEngine {
    pub fn new(name: impl Into<String>, k: f64) -> Result<Self> {
        if !(k.is_finite() && k >= 0.0) {
            return Err(Error::Config(format!("rrf k must be a finite non-negative number, got {k}")));
        }
        Ok(Self { name: name.into(), k })
    }
}

#[async_trait]
impl Engine for RrfEngine {
    fn name(&self) -> &str {
        &self.name
    }

    fn capabilities(&self) -> CapabilitySet {
        CapabilitySet::new([Capability::Fuse])
    }

    async fn fuse(&self, lists: &[ScoredList]) -> Result<ScoredList> {
        reciprocal_rank_fusion(lists, self.k)
    }
}
