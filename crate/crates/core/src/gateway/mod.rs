//! The HTTP face of a node: config loading, bootstrap, pipeline execution
//! and the `/query`, `/content`, `/services`, `/health` routes.

pub mod config;
mod executor;
pub mod http;
mod node;

pub use config::{resolve_listen, CacheConfig, ImportConfig, PipelineConfig, ServerConfig};
pub use executor::{ExecOptions, Executor};
pub use http::{router, serve, serve_with_shutdown, spawn, status_for, RunningServer};
pub use node::{Node, NodeStats, PipelineStats};
