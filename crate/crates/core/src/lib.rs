//! Retrieval pipeline serving.
//!
//! Engines (search, score, rewrite, fuse) sit behind per-service processors
//! that micro-batch and cache requests. Pipeline strings such as
//! `{bm25,dense}rrf%50 >> rerank` compose them per request. Nodes serve
//! everything over HTTP and can relay to each other.

pub mod collection;
pub mod engine;
pub mod error;
pub mod gateway;
pub mod loadgen;
pub mod model;
pub mod pipeline;
pub mod processor;
pub mod relay;
pub mod wire;

pub use error::{Error, Result};
pub use model::{Capability, CapabilitySet, CollectionDescriptor, Query, ScoredList, ServiceDescriptor};
