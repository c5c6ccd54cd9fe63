use async_trait::async_trait;

use super::text::is_stopword;
use super::Engine;
use crate::error::{Error, Result};
use crate::model::{Capability, CapabilitySet, Query};

/// The `variant-rewrite` engine. Produces, in order: the original query, its
/// lowercased form, and the query with stopwords removed. Exact duplicates
/// are collapsed.
pub struct VariantRewriter {
    name: String,
}

impl VariantRewriter {
    pub fn new(name: impl Into<String>) -> Self {
        Self { name: name.into() }
    }

    pub fn variants(query: &Query, n: usize) -> Result<Vec<Query>> {
        if n == 0 {
            return Err(Error::InvalidRequest("variant count must be >= 1".into()));
        }
        let original = query.text().to_string();
        let lowered = original.to_lowercase();
        let stripped = original
            .split_whitespace()
            .filter(|w| {
                let key: String = w.chars().filter(|c| c.is_alphanumeric()).collect::<String>().to_lowercase();
                !is_stopword(&key)
            })
            .collect::<Vec<_>>()
            .join(" ");

        let mut out: Vec<Query> = Vec::new();
        for text in [original, lowered, stripped] {
            if out.len() == n {
                break;
            }
            if text.trim().is_empty() || out.iter().any(|q| q.text() == text) {
                continue;
            }
            out.push(query.with_text(text)?);
        }
        Ok(out)
    }
}

#[async_trait]
impl Engine for VariantRewriter {
    fn name(&self) -> &str {
        &self.name
    }

    fn capabilities(&self) -> CapabilitySet {
        CapabilitySet::new([Capability::Rewrite])
    }

    async fn rewrite(&self, query: &Query, n: usize) -> Result<Vec<Query>> {
        Self::variants(query, n)
    }
}
