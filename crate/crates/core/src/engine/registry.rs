use std::collections::HashMap;
use std::sync::Arc;

use super::{Bm25Engine, Bm25Index, Bm25Params, Engine, LexicalReranker, RrfEngine, VariantRewriter, DEFAULT_RRF_K};
use crate::collection::CollectionStore;
use crate::error::{Error, Result};
use crate::model::ServiceDescriptor;
use crate::relay::RelayEngine;

/// What a factory may use while constructing an engine.
pub struct EngineContext<'a> {
    pub collections: &'a CollectionStore,
    pub http: reqwest::Client,
}

pub type EngineFactory = Arc<dyn Fn(&ServiceDescriptor, &EngineContext<'_>) -> Result<Arc<dyn Engine>> + Send + Sync>;

/// Maps the `engine` key of a service descriptor to a constructor.
///
/// Engines are registered at compile time; a deployment that needs a custom
/// engine registers it here before bootstrapping the node.
#[derive(Clone, Default)]
pub struct EngineRegistry {
    factories: HashMap<String, EngineFactory>,
}

impl EngineRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        r.register("bm25", build_bm25);
        r.register("rrf", |d, _| {
            let k = d.config_f64("k")?.unwrap_or(DEFAULT_RRF_K);
            Ok(Arc::new(RrfEngine::new(&d.name, k)?))
        });
        r.register("lexical-rerank", |d, _| {
            Ok(Arc::new(LexicalReranker::new(&d.name, bm25_params(d)?)))
        });
        r.register("variant-rewrite", |d, _| Ok(Arc::new(VariantRewriter::new(&d.name))));
        r.register("relay", |d, ctx| Ok(Arc::new(RelayEngine::from_descriptor(d, ctx.http.clone())?)));
        r
    }

    pub fn register<F>(&mut self, kind: &str, factory: F)
    where
        F: Fn(&ServiceDescriptor, &EngineContext<'_>) -> Result<Arc<dyn Engine>> + Send + Sync + 'static,
    {
        self.factories.insert(kind.to_string(), Arc::new(factory));
    }

    pub fn kinds(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn build(&self, descriptor: &ServiceDescriptor, ctx: &EngineContext<'_>) -> Result<Arc<dyn Engine>> {
        let factory = self
            .factories
            .get(&descriptor.engine_kind)
            .ok_or_else(|| Error::UnknownEngineKind(descriptor.engine_kind.clone()))?;
        factory(descriptor, ctx)
    }
}

fn bm25_params(d: &ServiceDescriptor) -> Result<Bm25Params> {
    let defaults = Bm25Params::default();
    Bm25Params::new(
        d.config_f64("k1")?.unwrap_or(defaults.k1),
        d.config_f64("b")?.unwrap_or(defaults.b),
    )
}

fn build_bm25(d: &ServiceDescriptor, ctx: &EngineContext<'_>) -> Result<Arc<dyn Engine>> {
    let collection_name = d
        .config_str("collection")
        .ok_or_else(|| Error::Config(format!("service {:?}: bm25 needs config.collection", d.name)))?;
    let collection = ctx.collections.get(collection_name)?;
    let mut docs = Vec::with_capacity(collection.index().len());
    collection.for_each_text(|id, text| docs.push((id.to_string(), text)))?;
    let index = Bm25Index::build(docs, bm25_params(d)?)?;
    Ok(Arc::new(Bm25Engine::new(&d.name, index)))
}
