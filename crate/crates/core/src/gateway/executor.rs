//! Walks a validated plan, calling processors stage by stage.

use std::collections::BTreeMap;
use std::sync::Arc;

use futures::future::{try_join_all, BoxFuture};
use futures::FutureExt;

use crate::collection::CollectionStore;
use crate::engine::{Candidate, ScoreRequest};
use crate::error::{Error, Result};
use crate::model::{Query, ScoredList};
use crate::pipeline::{PlanNode, StageRef};
use crate::processor::Processor;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecOptions {
    /// Collection that supplies document text to Score stages.
    pub collection: Option<String>,
    /// Documents requested from searches that feed a later stage.
    pub interior_depth: usize,
    /// Sub-queries requested from a generator.
    pub rewrite_variants: usize,
}

/// Everything one execution needs; cheap to build per request.
pub struct Executor<'a> {
    pub services: &'a BTreeMap<String, Arc<Processor>>,
    pub collections: &'a CollectionStore,
    pub options: ExecOptions,
}

impl<'a> Executor<'a> {
    /// Runs `root` for `query` and truncates to `query.limit()`.
    pub async fn execute(&self, root: &PlanNode, query: &Query) -> Result<ScoredList> {
        let list = match root {
            // a bare service behaves exactly like the `service` request form
            PlanNode::Search(stage) => self.search(stage, query, query.limit()).await?,
            other => self.run(other, query, None).await?,
        };
        list.truncate(query.limit())
    }

    fn processor(&self, stage: &StageRef) -> Result<&Arc<Processor>> {
        self.services
            .get(&stage.name)
            .ok_or_else(|| Error::UnknownService(stage.name.clone()).at_stage(stage.position, &stage.name))
    }

    fn depth(&self, query: &Query) -> usize {
        query.limit().max(self.options.interior_depth)
    }

    async fn search(&self, stage: &StageRef, query: &Query, depth: usize) -> Result<ScoredList> {
        let tag = |e: Error| e.at_stage(stage.position, &stage.name);
        let q = query.with_limit(depth).map_err(tag)?;
        self.processor(stage)?.search(q).await.map_err(tag)
    }

    async fn score(&self, stage: &StageRef, query: &Query, upstream: &ScoredList) -> Result<ScoredList> {
        let tag = |e: Error| e.at_stage(stage.position, &stage.name);
        let processor = self.processor(stage)?;
        if upstream.is_empty() {
            return Ok(ScoredList::empty());
        }
        let candidates = self.candidates(upstream).await.map_err(tag)?;
        let request = ScoreRequest {
            query: query.with_limit(candidates.len()).map_err(tag)?,
            candidates,
        };
        processor.score(request).await.map_err(tag)
    }

    async fn candidates(&self, upstream: &ScoredList) -> Result<Vec<Candidate>> {
        let name = self.options.collection.as_deref().ok_or_else(|| {
            Error::InvalidRequest("this pipeline rescored documents and needs a \"collection\"".into())
        })?;
        let collection = self.collections.get(name)?.clone();
        let ids: Vec<String> = upstream.doc_ids().map(str::to_string).collect();
        tokio::task::spawn_blocking(move || {
            ids.into_iter()
                .map(|id| {
                    let doc = collection.get_document(&id)?;
                    Ok(Candidate::new(id, collection.document_text(&doc)))
                })
                .collect::<Result<Vec<_>>>()
        })
        .await
        .map_err(|e| Error::EngineFailure(format!("document fetch task: {e}")))?
    }

    fn run<'s>(
        &'s self,
        node: &'s PlanNode,
        query: &'s Query,
        upstream: Option<&'s ScoredList>,
    ) -> BoxFuture<'s, Result<ScoredList>> {
        async move {
            match node {
                PlanNode::Search(stage) => self.search(stage, query, self.depth(query)).await,
                PlanNode::Score(stage) => {
                    let upstream = upstream.ok_or_else(|| {
                        Error::EngineFailure("score stage without upstream".into()).at_stage(stage.position, &stage.name)
                    })?;
                    self.score(stage, query, upstream).await
                }
                PlanNode::Limit { child, k } => self.run(child, query, upstream).await?.truncate(*k),
                PlanNode::Sequence(stages) => {
                    let (head, rest) = stages.split_first().expect("sequences are non-empty");
                    let mut current = self.run(head, query, upstream).await?;
                    for stage in rest {
                        current = self.run(stage, query, Some(&current)).await?;
                    }
                    Ok(current)
                }
                PlanNode::Parallel {
                    generator,
                    branches,
                    fuser,
                } => {
                    let queries = match generator {
                        None => vec![query.clone()],
                        Some(g) => {
                            let tag = |e: Error| e.at_stage(g.position, &g.name);
                            let mut qs = self
                                .processor(g)?
                                .rewrite(query, self.options.rewrite_variants)
                                .await
                                .map_err(tag)?;
                            qs.truncate(self.options.rewrite_variants);
                            if qs.is_empty() {
                                return Err(tag(Error::EngineFailure("rewriter produced no queries".into())));
                            }
                            qs
                        }
                    };
                    let runs = queries
                        .iter()
                        .flat_map(|q| branches.iter().map(move |b| self.run(b, q, upstream)));
                    let lists = try_join_all(runs).await?;
                    let tag = |e: Error| e.at_stage(fuser.position, &fuser.name);
                    self.processor(fuser)?.fuse(&lists).await.map_err(tag)
                }
            }
        }
        .boxed()
    }
}
