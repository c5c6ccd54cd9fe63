use std::collections::HashMap;

use super::ast::{unparse, PipelineAst};
use crate::error::{Error, Result};
use crate::model::{Capability, CapabilitySet};

/// Anything that can answer "which capabilities does service `name` have?".
pub trait ServiceCatalog {
    fn capabilities(&self, name: &str) -> Option<CapabilitySet>;
}

impl ServiceCatalog for HashMap<String, CapabilitySet> {
    fn capabilities(&self, name: &str) -> Option<CapabilitySet> {
        self.get(name).copied()
    }
}

/// A service reference together with its byte offset in the canonical
/// pipeline string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageRef {
    pub name: String,
    pub position: usize,
}

/// A validated pipeline: every service resolved and assigned the capability
/// it will be invoked with.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PlanNode {
    /// First-stage retrieval from the query.
    Search(StageRef),
    /// Rescoring of upstream candidates.
    Score(StageRef),
    Limit {
        child: Box<PlanNode>,
        k: usize,
    },
    Sequence(Vec<PlanNode>),
    Parallel {
        generator: Option<StageRef>,
        branches: Vec<PlanNode>,
        fuser: StageRef,
    },
}

impl PlanNode {
    /// Whether any stage in this subtree rescores candidates (and therefore
    /// needs document text).
    pub fn needs_documents(&self) -> bool {
        match self {
            PlanNode::Search(_) => false,
            PlanNode::Score(_) => true,
            PlanNode::Limit { child, .. } => child.needs_documents(),
            PlanNode::Sequence(stages) => stages.iter().any(PlanNode::needs_documents),
            PlanNode::Parallel { branches, .. } => branches.iter().any(PlanNode::needs_documents),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Plan {
    pub canonical: String,
    pub root: PlanNode,
}

/// Resolves every service in `ast` against `catalog` and checks capabilities.
///
/// A stage that receives no upstream results must Search; a stage fed by an
/// upstream ranking (anything after `>>`, including the first stage of each
/// branch of a parallel block placed after `>>`) must Score. Generators must
/// Rewrite and fusers must Fuse.
pub fn validate(ast: &PipelineAst, catalog: &dyn ServiceCatalog) -> Result<Plan> {
    let mut cursor = 0;
    let root = resolve(ast, false, &mut cursor, catalog)?;
    Ok(Plan {
        canonical: unparse(ast),
        root,
    })
}

fn require(name: &str, needed: Capability, position: usize, catalog: &dyn ServiceCatalog) -> Result<StageRef> {
    let declared = catalog
        .capabilities(name)
        .ok_or_else(|| Error::UnknownService(name.to_string()))
        .map_err(|e| e.at_stage(position, name))?;
    if !declared.contains(needed) {
        return Err(Error::CapabilityMismatch {
            name: name.to_string(),
            needed,
            declared,
        }
        .at_stage(position, name));
    }
    Ok(StageRef {
        name: name.to_string(),
        position,
    })
}

// `cursor` tracks the byte offset in the canonical string, mirroring `unparse`.
fn resolve(
    ast: &PipelineAst,
    has_upstream: bool,
    cursor: &mut usize,
    catalog: &dyn ServiceCatalog,
) -> Result<PlanNode> {
    match ast {
        PipelineAst::Service(name) => {
            let pos = *cursor;
            *cursor += name.len();
            if has_upstream {
                Ok(PlanNode::Score(require(name, Capability::Score, pos, catalog)?))
            } else {
                Ok(PlanNode::Search(require(name, Capability::Search, pos, catalog)?))
            }
        }
        PipelineAst::Limit { child, k } => {
            let child = resolve(child, has_upstream, cursor, catalog)?;
            *cursor += 1 + k.to_string().len();
            Ok(PlanNode::Limit {
                child: Box::new(child),
                k: *k,
            })
        }
        PipelineAst::Sequence(stages) => {
            let mut out = Vec::with_capacity(stages.len());
            for (i, stage) in stages.iter().enumerate() {
                if i > 0 {
                    *cursor += 2;
                }
                out.push(resolve(stage, has_upstream || i > 0, cursor, catalog)?);
            }
            Ok(PlanNode::Sequence(out))
        }
        PipelineAst::Parallel {
            generator,
            branches,
            fuser,
        } => {
            let generator = match generator {
                Some(g) => {
                    let pos = *cursor;
                    *cursor += g.len();
                    Some(require(g, Capability::Rewrite, pos, catalog)?)
                }
                None => None,
            };
            *cursor += 1;
            let mut out = Vec::with_capacity(branches.len());
            for (i, b) in branches.iter().enumerate() {
                if i > 0 {
                    *cursor += 1;
                }
                out.push(resolve(b, has_upstream, cursor, catalog)?);
            }
            *cursor += 1;
            let pos = *cursor;
            *cursor += fuser.len();
            let fuser = require(fuser, Capability::Fuse, pos, catalog)?;
            Ok(PlanNode::Parallel {
                generator,
                branches: out,
                fuser,
            })
        }
    }
}
