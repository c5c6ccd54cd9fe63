use std::num::NonZeroUsize;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use async_trait::async_trait;
use lru::LruCache;
use sha2::{Digest, Sha256};
use tracing::{info, warn};

use crate::error::Result;
use crate::model::ScoredList;

/// Stable key for a cached result.
///
/// Fields are length-prefixed before hashing so no two distinct
/// `(service, text, limit)` triples share an encoding.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CacheKey(String);

impl CacheKey {
    pub fn new(service: &str, text: &str, limit: usize) -> Self {
        let text = text.trim();
        let mut h = Sha256::new();
        h.update(format!("{}:{service}|{}:{text}|{limit}", service.len(), text.len()));
        Self(format!("pipeserve:v1:{}", hex::encode(h.finalize())))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

/// The network tier of the cache.
#[async_trait]
pub trait ExternalCache: Send + Sync {
    async fn get(&self, key: &str) -> Result<Option<String>>;
    async fn set(&self, key: &str, value: &str, ttl: Duration) -> Result<()>;
}

pub const DEFAULT_EXTERNAL_TTL: Duration = Duration::from_secs(24 * 60 * 60);

fn encode(list: &ScoredList) -> String {
    serde_json::to_string(list.entries()).expect("finite scores serialize")
}

fn decode(raw: &str) -> Option<ScoredList> {
    let entries: Vec<(String, f64)> = serde_json::from_str(raw).ok()?;
    ScoredList::from_entries(entries).ok()
}

/// Bounded in-memory LRU in front of an optional external store.
///
/// External failures never propagate: they read as a miss, and are logged
/// once when an outage starts and once when it ends.
pub struct ResultCache {
    memory: Option<Mutex<LruCache<CacheKey, ScoredList>>>,
    external: Option<Arc<dyn ExternalCache>>,
    external_ttl: Duration,
    external_down: Arc<AtomicBool>,
}

impl ResultCache {
    pub fn memory(capacity: usize) -> Self {
        Self {
            memory: NonZeroUsize::new(capacity).map(|c| Mutex::new(LruCache::new(c))),
            external: None,
            external_ttl: DEFAULT_EXTERNAL_TTL,
            external_down: Arc::new(AtomicBool::new(false)),
        }
    }

    pub fn with_external(mut self, external: Arc<dyn ExternalCache>, ttl: Duration) -> Self {
        self.external = Some(external);
        self.external_ttl = ttl;
        self
    }

    pub fn has_external(&self) -> bool {
        self.external.is_some()
    }

    pub fn get_memory(&self, key: &CacheKey) -> Option<ScoredList> {
        let mem = self.memory.as_ref()?;
        mem.lock().expect("cache lock").get(key).cloned()
    }

    pub fn contains_memory(&self, key: &CacheKey) -> bool {
        self.memory
            .as_ref()
            .is_some_and(|m| m.lock().expect("cache lock").contains(key))
    }

    fn put_memory(&self, key: CacheKey, value: ScoredList) {
        if let Some(mem) = &self.memory {
            mem.lock().expect("cache lock").put(key, value);
        }
    }

    fn note_external(&self, ok: bool, err: Option<&crate::error::Error>) {
        if ok {
            if self.external_down.swap(false, Ordering::SeqCst) {
                info!("external cache reachable again");
            }
        } else if !self.external_down.swap(true, Ordering::SeqCst) {
            warn!(error = %err.map(ToString::to_string).unwrap_or_default(), "external cache unavailable; serving without it");
        }
    }

    /// Memory first, then the external tier. External hits are promoted
    /// into memory.
    pub async fn get(&self, key: &CacheKey) -> Option<ScoredList> {
        if let Some(hit) = self.get_memory(key) {
            return Some(hit);
        }
        let external = self.external.as_ref()?;
        match external.get(key.as_str()).await {
            Ok(raw) => {
                self.note_external(true, None);
                let list = decode(&raw?)?;
                self.put_memory(key.clone(), list.clone());
                Some(list)
            }
            Err(e) => {
                self.note_external(false, Some(&e));
                None
            }
        }
    }

    /// Stores in memory now; writes through to the external tier in the
    /// background.
    pub fn put(self: &Arc<Self>, key: CacheKey, value: ScoredList) {
        if self.external.is_some() {
            let this = self.clone();
            let (k, v) = (key.clone(), encode(&value));
            tokio::spawn(async move {
                let ext = this.external.as_ref().expect("checked above");
                match ext.set(k.as_str(), &v, this.external_ttl).await {
                    Ok(()) => this.note_external(true, None),
                    Err(e) => this.note_external(false, Some(&e)),
                }
            });
        }
        self.put_memory(key, value);
    }

    /// Awaitable variant of [`put`](Self::put), used where the caller needs
    /// the write-through to have happened.
    pub async fn put_and_flush(&self, key: CacheKey, value: ScoredList) {
        if let Some(ext) = &self.external {
            match ext.set(key.as_str(), &encode(&value), self.external_ttl).await {
                Ok(()) => self.note_external(true, None),
                Err(e) => self.note_external(false, Some(&e)),
            }
        }
        self.put_memory(key, value);
    }
}
