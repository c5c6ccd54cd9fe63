use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CollectionDescriptor, ServiceDescriptor};

pub const DEFAULT_LISTEN: &str = "127.0.0.1:8000";
pub const PORT_ENV: &str = "PIPESERVE_PORT";
pub const DEFAULT_INTERIOR_DEPTH: usize = 100;
pub const DEFAULT_REWRITE_VARIANTS: usize = 3;

/// A node's configuration file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerConfig {
    /// Other nodes whose services are relayed from this one.
    #[serde(default)]
    pub server_imports: Vec<String>,
    #[serde(default)]
    pub services: Vec<ServiceDescriptor>,
    #[serde(default)]
    pub collections: Vec<CollectionDescriptor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub listen: Option<String>,
    #[serde(default)]
    pub cache: CacheConfig,
    #[serde(default)]
    pub pipeline: PipelineConfig,
    #[serde(default)]
    pub imports: ImportConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CacheConfig {
    pub enabled: bool,
    /// Entries held by the in-memory LRU tier.
    pub capacity: usize,
    /// `host:port` of a RESP server (Redis, Valkey, ...) used as the second tier.
    pub external: Option<String>,
    pub external_ttl_secs: u64,
    pub external_timeout_ms: u64,
}

impl Default for CacheConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            capacity: 10_000,
            external: None,
            external_ttl_secs: 24 * 60 * 60,
            external_timeout_ms: 250,
        }
    }
}

impl CacheConfig {
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Documents fetched by searches whose output feeds a later stage.
    pub interior_depth: usize,
    /// Sub-queries requested from a generator in `gen{...}fuser`.
    pub rewrite_variants: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            interior_depth: DEFAULT_INTERIOR_DEPTH,
            rewrite_variants: DEFAULT_REWRITE_VARIANTS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImportConfig {
    pub timeout_ms: u64,
    /// Abort startup when an import endpoint is unreachable instead of
    /// logging and carrying on.
    pub fail_fast: bool,
}

impl Default for ImportConfig {
    fn default() -> Self {
        Self {
            timeout_ms: 5_000,
            fail_fast: false,
        }
    }
}

impl ImportConfig {
    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }
}

impl ServerConfig {
    pub fn from_json_str(raw: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(raw).map_err(|e| Error::Config(format!("config is not valid JSON: {e}")))?;
        if value.get("file_imports").is_some() {
            return Err(Error::FileImportsUnsupported);
        }
        let config: ServerConfig = serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
        config.check()?;
        Ok(config)
    }

    /// Reads a config file. Relative `doc_path`s are resolved against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut config = Self::from_json_str(&raw)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        for c in &mut config.collections {
            if c.doc_path.is_relative() {
                c.doc_path = base.join(&c.doc_path);
            }
        }
        Ok(config)
    }

    fn check(&self) -> Result<()> {
        for s in &self.services {
            s.validate()?;
        }
        if self.pipeline.interior_depth == 0 || self.pipeline.rewrite_variants == 0 {
            return Err(Error::Config("pipeline.interior_depth and pipeline.rewrite_variants must be >= 1".into()));
        }
        Ok(())
    }

    pub fn with_collection(mut self, name: &str, path: impl Into<PathBuf>) -> Self {
        self.collections.push(CollectionDescriptor::new(name, path));
        self
    }

    pub fn with_service(mut self, service: ServiceDescriptor) -> Self {
        self.services.push(service);
        self
    }
}

/// Listen address: `--port` beats the environment, which beats the file.
pub fn resolve_listen(config: Option<&str>, env_port: Option<&str>, cli_port: Option<u16>) -> Result<SocketAddr> {
    let mut addr: SocketAddr = config
        .unwrap_or(DEFAULT_LISTEN)
        .parse()
        .map_err(|e| Error::Config(format!("listen address: {e}")))?;
    if let Some(p) = env_port {
        addr.set_port(
            p.trim()
                .parse()
                .map_err(|_| Error::Config(format!("{PORT_ENV}={p:?} is not a port")))?,
        );
    }
    if let Some(p) = cli_port {
        addr.set_port(p);
    }
    Ok(addr)
}
