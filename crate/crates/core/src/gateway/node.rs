use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};
use std::time::Duration;

use serde::Serialize;
use tracing::{info, warn};

use super::config::ServerConfig;
use super::executor::{ExecOptions, Executor};
use crate::collection::{Collection, CollectionStore, Document};
use crate::engine::{Candidate, Engine, EngineContext, EngineRegistry, ScoreRequest};
use crate::error::{Error, Result};
use crate::model::{CapabilitySet, Query, ScoredList, ServiceDescriptor};
use crate::pipeline::{parse, validate, Plan, ServiceCatalog};
use crate::processor::{BatchPolicy, CacheKey, Processor, ProcessorStats, RespClient, ResultCache};
use crate::relay::{self, RelayEngine};
use crate::wire::{Origin, ServiceEntry};

struct Hosted {
    processor: Arc<Processor>,
    origin: Origin,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct PipelineStats {
    pub executions: u64,
    pub cache_hits: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeStats {
    pub services: BTreeMap<String, ProcessorStats>,
    pub pipelines: PipelineStats,
}

/// A running set of collections and services: everything behind the HTTP
/// routes, usable in-process as well.
pub struct Node {
    config: ServerConfig,
    collections: CollectionStore,
    services: RwLock<BTreeMap<String, Hosted>>,
    cache: Option<Arc<ResultCache>>,
    http: reqwest::Client,
    registry: EngineRegistry,
    pipeline_executions: AtomicU64,
    pipeline_cache_hits: AtomicU64,
}

impl std::fmt::Debug for Node {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Node")
            .field("services", &self.service_names())
            .field("collections", &self.collections.names().collect::<Vec<_>>())
            .finish()
    }
}

impl ServiceCatalog for Node {
    fn capabilities(&self, name: &str) -> Option<CapabilitySet> {
        let services = self.services.read().expect("services lock");
        services.get(name).map(|h| h.processor.capabilities())
    }
}

impl Node {
    /// Loads collections, builds engines, starts processors and resolves
    /// `server_imports`. Must run inside a tokio runtime.
    pub async fn start(config: ServerConfig, registry: EngineRegistry) -> Result<Arc<Self>> {
        let mut collections = CollectionStore::new();
        for descriptor in &config.collections {
            let descriptor = descriptor.clone();
            let name = descriptor.name.clone();
            let collection = tokio::task::spawn_blocking(move || Collection::open(descriptor))
                .await
                .map_err(|e| Error::Config(format!("loading collection {name:?}: {e}")))??;
            info!(collection = %name, documents = collection.index().len(), "collection loaded");
            collections.insert(collection)?;
        }

        let cache = if config.cache.enabled {
            let mut cache = ResultCache::memory(config.cache.capacity);
            if let Some(addr) = &config.cache.external {
                let client = RespClient::new(addr, Duration::from_millis(config.cache.external_timeout_ms));
                cache = cache.with_external(Arc::new(client), Duration::from_secs(config.cache.external_ttl_secs));
            }
            Some(Arc::new(cache))
        } else {
            None
        };

        let http = reqwest::Client::builder()
            .build()
            .map_err(|e| Error::Config(format!("http client: {e}")))?;

        let mut hosted = BTreeMap::new();
        {
            let ctx = EngineContext {
                collections: &collections,
                http: http.clone(),
            };
            for d in &config.services {
                if hosted.contains_key(&d.name) {
                    return Err(Error::Config(format!("service {:?} declared twice", d.name)));
                }
                let engine = registry.build(d, &ctx)?;
                let processor = Processor::start(engine, BatchPolicy::new(d.batch_size, d.max_wait()), cache.clone());
                info!(service = %d.name, engine = %d.engine_kind, "service started");
                hosted.insert(
                    d.name.clone(),
                    Hosted {
                        processor: Arc::new(processor),
                        origin: Origin::Local,
                    },
                );
            }
        }

        let node = Arc::new(Self {
            config,
            collections,
            services: RwLock::new(hosted),
            cache,
            http,
            registry,
            pipeline_executions: AtomicU64::new(0),
            pipeline_cache_hits: AtomicU64::new(0),
        });
        node.reimport().await?;
        Ok(node)
    }

    pub fn config(&self) -> &ServerConfig {
        &self.config
    }

    pub fn registry(&self) -> &EngineRegistry {
        &self.registry
    }

    pub fn collections(&self) -> &CollectionStore {
        &self.collections
    }

    /// (Re)resolves `server_imports`, replacing every previously imported
    /// service. Local services always win a name collision.
    pub async fn reimport(&self) -> Result<usize> {
        let timeout = self.config.imports.timeout();
        let mut imported: BTreeMap<String, RelayEngine> = BTreeMap::new();
        for endpoint in &self.config.server_imports {
            let relays = if self.config.imports.fail_fast {
                relay::import_services(endpoint, &self.http, timeout).await?
            } else {
                relay::import_or_warn(endpoint, &self.http, timeout).await
            };
            for r in relays {
                let name = r.name().to_string();
                if imported.contains_key(&name) {
                    warn!(service = %name, endpoint, "service offered by two imports; keeping the first");
                    continue;
                }
                imported.insert(name, r);
            }
        }

        let mut services = self.services.write().expect("services lock");
        services.retain(|_, h| h.origin == Origin::Local);
        let mut count = 0;
        for (name, relay) in imported {
            if services.contains_key(&name) {
                warn!(service = %name, "local service shadows an imported one");
                continue;
            }
            let d = relay::descriptor_for_import(&relay);
            let processor = Processor::start(
                Arc::new(relay),
                BatchPolicy::new(d.batch_size, d.max_wait()),
                self.cache.clone(),
            );
            info!(service = %name, "service imported");
            services.insert(
                name,
                Hosted {
                    processor: Arc::new(processor),
                    origin: Origin::Relayed,
                },
            );
            count += 1;
        }
        Ok(count)
    }

    pub fn service_names(&self) -> Vec<String> {
        self.services.read().expect("services lock").keys().cloned().collect()
    }

    pub fn list_services(&self) -> Vec<ServiceEntry> {
        let services = self.services.read().expect("services lock");
        services
            .iter()
            .map(|(name, h)| ServiceEntry {
                name: name.clone(),
                capabilities: h.processor.capabilities(),
                origin: h.origin,
            })
            .collect()
    }

    pub fn processor(&self, name: &str) -> Result<Arc<Processor>> {
        let services = self.services.read().expect("services lock");
        services
            .get(name)
            .map(|h| h.processor.clone())
            .ok_or_else(|| Error::UnknownService(name.to_string()))
    }

    fn processors(&self) -> BTreeMap<String, Arc<Processor>> {
        let services = self.services.read().expect("services lock");
        services.iter().map(|(k, h)| (k.clone(), h.processor.clone())).collect()
    }

    pub fn stats(&self) -> NodeStats {
        let services = self.services.read().expect("services lock");
        NodeStats {
            services: services.iter().map(|(k, h)| (k.clone(), h.processor.stats())).collect(),
            pipelines: PipelineStats {
                executions: self.pipeline_executions.load(Ordering::SeqCst),
                cache_hits: self.pipeline_cache_hits.load(Ordering::SeqCst),
            },
        }
    }

    pub fn get_document(&self, collection: &str, doc_id: &str) -> Result<Document> {
        self.collections.get_document(collection, doc_id)
    }

    pub async fn search(&self, service: &str, query: Query) -> Result<ScoredList> {
        self.processor(service)?.search(query).await
    }

    pub async fn score(&self, service: &str, query: Query, candidates: Vec<Candidate>) -> Result<ScoredList> {
        self.processor(service)?
            .score(ScoreRequest { query, candidates })
            .await
    }

    pub async fn rewrite(&self, service: &str, query: &Query, n: usize) -> Result<Vec<Query>> {
        self.processor(service)?.rewrite(query, n).await
    }

    pub async fn fuse(&self, service: &str, lists: &[ScoredList]) -> Result<ScoredList> {
        self.processor(service)?.fuse(lists).await
    }

    pub fn plan(&self, pipeline: &str) -> Result<Plan> {
        validate(&parse(pipeline)?, self)
    }

    fn exec_options(&self, collection: Option<&str>, depth: Option<usize>) -> Result<ExecOptions> {
        if depth == Some(0) {
            return Err(Error::InvalidRequest("depth must be >= 1".into()));
        }
        Ok(ExecOptions {
            collection: collection.map(str::to_string),
            interior_depth: depth.unwrap_or(self.config.pipeline.interior_depth),
            rewrite_variants: self.config.pipeline.rewrite_variants,
        })
    }

    /// Parses, validates and runs a pipeline string. Returns the canonical
    /// form alongside the result.
    pub async fn run_pipeline(
        &self,
        pipeline: &str,
        query: &Query,
        collection: Option<&str>,
        depth: Option<usize>,
    ) -> Result<(String, ScoredList)> {
        let plan = self.plan(pipeline)?;
        let options = self.exec_options(collection, depth)?;
        if let Some(name) = &options.collection {
            self.collections.get(name)?;
        }
        self.pipeline_executions.fetch_add(1, Ordering::SeqCst);

        // whole-pipeline cache, keyed by everything that can change the result
        let key = self.cache.as_ref().map(|_| {
            let service = format!(
                "{}@{}#{}#{}",
                plan.canonical,
                options.collection.as_deref().unwrap_or(""),
                options.interior_depth,
                options.rewrite_variants
            );
            CacheKey::new(&service, query.text(), query.limit())
        });
        if let (Some(cache), Some(key)) = (&self.cache, &key) {
            if let Some(hit) = cache.get(key).await {
                self.pipeline_cache_hits.fetch_add(1, Ordering::SeqCst);
                return Ok((plan.canonical, hit));
            }
        }

        let services = self.processors();
        let executor = Executor {
            services: &services,
            collections: &self.collections,
            options,
        };
        let list = executor.execute(&plan.root, query).await?;
        if let (Some(cache), Some(key)) = (&self.cache, key) {
            cache.put(key, list.clone());
        }
        Ok((plan.canonical, list))
    }

    /// Registers an extra local service after startup.
    pub fn add_service(&self, descriptor: &ServiceDescriptor) -> Result<()> {
        descriptor.validate()?;
        let engine = self.registry.build(
            descriptor,
            &EngineContext {
                collections: &self.collections,
                http: self.http.clone(),
            },
        )?;
        let processor = Processor::start(
            engine,
            BatchPolicy::new(descriptor.batch_size, descriptor.max_wait()),
            self.cache.clone(),
        );
        let mut services = self.services.write().expect("services lock");
        if services.get(&descriptor.name).is_some_and(|h| h.origin == Origin::Local) {
            return Err(Error::Config(format!("service {:?} declared twice", descriptor.name)));
        }
        services.insert(
            descriptor.name.clone(),
            Hosted {
                processor: Arc::new(processor),
                origin: Origin::Local,
            },
        );
        Ok(())
    }
}
