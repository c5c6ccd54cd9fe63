//! Per-service request queue with micro-batching and result caching.
//!
//! A batch is handed to the engine as soon as it holds `batch_size` requests
//! or its oldest request has waited `max_wait`, whichever comes first. Cache
//! hits never touch the queue.

pub mod cache;
pub mod resp;

use std::future::Future;
use std::panic::AssertUnwindSafe;
use std::pin::Pin;
use std::sync::atomic::{AtomicI64, AtomicU64, Ordering};
use std::sync::Arc;
use std::task::{Context, Poll};
use std::time::Duration;

use futures::future::BoxFuture;
use futures::FutureExt;
use serde::Serialize;
use sha2::{Digest, Sha256};
use tokio::sync::{mpsc, oneshot, Mutex};
use tokio::time::Instant;
use tracing::debug;

pub use cache::{CacheKey, ExternalCache, ResultCache, DEFAULT_EXTERNAL_TTL};
pub use resp::RespClient;

use crate::engine::{BatchResult, Engine, ScoreRequest};
use crate::error::{Error, Result};
use crate::model::{CapabilitySet, Query, ScoredList, DEFAULT_BATCH_SIZE, DEFAULT_MAX_WAIT};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchPolicy {
    pub batch_size: usize,
    pub max_wait: Duration,
}

impl Default for BatchPolicy {
    fn default() -> Self {
        Self {
            batch_size: DEFAULT_BATCH_SIZE,
            max_wait: DEFAULT_MAX_WAIT,
        }
    }
}

impl BatchPolicy {
    pub fn new(batch_size: usize, max_wait: Duration) -> Self {
        Self {
            batch_size: batch_size.max(1),
            max_wait,
        }
    }
}

#[derive(Default)]
struct Counters {
    enqueued: AtomicU64,
    dispatched_batches: AtomicU64,
    dispatched_requests: AtomicU64,
    engine_invocations: AtomicU64,
    cache_hits: AtomicU64,
    cache_misses: AtomicU64,
    queue_depth: AtomicI64,
}

/// Point-in-time copy of a processor's counters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProcessorStats {
    pub enqueued: u64,
    pub dispatched_batches: u64,
    pub engine_invocations: u64,
    pub cache_hits: u64,
    pub cache_misses: u64,
    pub queue_depth: i64,
    pub mean_batch_size: f64,
}

/// Resolves to the result of one submission.
#[must_use = "a completion does nothing unless awaited"]
pub struct Completion(BoxFuture<'static, Result<ScoredList>>);

impl Completion {
    fn ready(result: Result<ScoredList>) -> Self {
        Self(futures::future::ready(result).boxed())
    }

    fn waiting(rx: oneshot::Receiver<Result<ScoredList>>) -> Self {
        Self(
            rx.map(|r| r.unwrap_or_else(|_| Err(Error::EngineFailure("processor stopped".into()))))
                .boxed(),
        )
    }
}

impl Future for Completion {
    type Output = Result<ScoredList>;

    fn poll(mut self: Pin<&mut Self>, cx: &mut Context<'_>) -> Poll<Self::Output> {
        self.0.as_mut().poll(cx)
    }
}

struct Job<T> {
    item: T,
    enqueued_at: Instant,
    key: Option<CacheKey>,
    reply: oneshot::Sender<Result<ScoredList>>,
}

/// Work items a dispatch loop can batch.
trait BatchItem: Send + Sync + 'static {
    fn limit(&self) -> usize;
    fn run<'a>(engine: &'a dyn Engine, items: &'a [Self]) -> BoxFuture<'a, BatchResult<ScoredList>>
    where
        Self: Sized;
}

impl BatchItem for Query {
    fn limit(&self) -> usize {
        Query::limit(self)
    }

    fn run<'a>(engine: &'a dyn Engine, items: &'a [Self]) -> BoxFuture<'a, BatchResult<ScoredList>> {
        engine.search_batch(items)
    }
}

impl BatchItem for ScoreRequest {
    fn limit(&self) -> usize {
        self.query.limit()
    }

    fn run<'a>(engine: &'a dyn Engine, items: &'a [Self]) -> BoxFuture<'a, BatchResult<ScoredList>> {
        engine.score_batch(items)
    }
}

struct Shared {
    engine: Arc<dyn Engine>,
    cache: Option<Arc<ResultCache>>,
    counters: Counters,
    // held across each engine call unless the engine accepts overlap
    gate: Mutex<()>,
}

/// Queue, batcher and cache in front of one engine.
pub struct Processor {
    name: String,
    policy: BatchPolicy,
    shared: Arc<Shared>,
    search_tx: mpsc::UnboundedSender<Job<Query>>,
    score_tx: mpsc::UnboundedSender<Job<ScoreRequest>>,
}

impl Processor {
    /// Starts the dispatch loops; must be called inside a tokio runtime.
    /// The loops stop when the processor is dropped.
    pub fn start(engine: Arc<dyn Engine>, policy: BatchPolicy, cache: Option<Arc<ResultCache>>) -> Self {
        let name = engine.name().to_string();
        let shared = Arc::new(Shared {
            engine,
            cache,
            counters: Counters::default(),
            gate: Mutex::new(()),
        });
        let (search_tx, search_rx) = mpsc::unbounded_channel();
        let (score_tx, score_rx) = mpsc::unbounded_channel();
        tokio::spawn(dispatch_loop::<Query>(search_rx, shared.clone(), policy));
        tokio::spawn(dispatch_loop::<ScoreRequest>(score_rx, shared.clone(), policy));
        Self {
            name,
            policy,
            shared,
            search_tx,
            score_tx,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn policy(&self) -> BatchPolicy {
        self.policy
    }

    pub fn engine(&self) -> &Arc<dyn Engine> {
        &self.shared.engine
    }

    pub fn capabilities(&self) -> CapabilitySet {
        self.shared.engine.capabilities()
    }

    pub fn cache(&self) -> Option<&Arc<ResultCache>> {
        self.shared.cache.as_ref()
    }

    pub fn stats(&self) -> ProcessorStats {
        let c = &self.shared.counters;
        let batches = c.dispatched_batches.load(Ordering::SeqCst);
        let requests = c.dispatched_requests.load(Ordering::SeqCst);
        ProcessorStats {
            enqueued: c.enqueued.load(Ordering::SeqCst),
            dispatched_batches: batches,
            engine_invocations: c.engine_invocations.load(Ordering::SeqCst),
            cache_hits: c.cache_hits.load(Ordering::SeqCst),
            cache_misses: c.cache_misses.load(Ordering::SeqCst),
            queue_depth: c.queue_depth.load(Ordering::SeqCst),
            mean_batch_size: if batches == 0 { 0.0 } else { requests as f64 / batches as f64 },
        }
    }

    /// Queues a search. Returns at once; the completion resolves to a
    /// canonical list of at most `query.limit()` entries.
    pub fn submit(&self, query: Query) -> Completion {
        let key = self
            .shared
            .cache
            .as_ref()
            .map(|_| CacheKey::new(&self.name, query.text(), query.limit()));
        submit_job(&self.shared, &self.search_tx, query, key)
    }

    /// Queues a rerank of `request.candidates`.
    pub fn submit_score(&self, request: ScoreRequest) -> Completion {
        let key = self.shared.cache.as_ref().map(|_| {
            let mut h = Sha256::new();
            for c in &request.candidates {
                h.update(format!("{}:{}|{}:{}|", c.doc_id.len(), c.doc_id, c.text.len(), c.text));
            }
            let service = format!("{}#score:{}", self.name, hex::encode(h.finalize()));
            CacheKey::new(&service, request.query.text(), request.query.limit())
        });
        submit_job(&self.shared, &self.score_tx, request, key)
    }

    pub async fn search(&self, query: Query) -> Result<ScoredList> {
        self.submit(query).await
    }

    pub async fn score(&self, request: ScoreRequest) -> Result<ScoredList> {
        self.submit_score(request).await
    }

    /// Rewriting is not batched or cached: it is cheap and its output feeds
    /// batched searches anyway.
    pub async fn rewrite(&self, query: &Query, n: usize) -> Result<Vec<Query>> {
        self.shared.engine.rewrite(query, n).await
    }

    pub async fn fuse(&self, lists: &[ScoredList]) -> Result<ScoredList> {
        self.shared.engine.fuse(lists).await
    }
}

fn submit_job<T: BatchItem>(
    shared: &Arc<Shared>,
    tx: &mpsc::UnboundedSender<Job<T>>,
    item: T,
    key: Option<CacheKey>,
) -> Completion {
    let counters = &shared.counters;
    counters.enqueued.fetch_add(1, Ordering::SeqCst);

    if let (Some(cache), Some(k)) = (&shared.cache, &key) {
        if let Some(hit) = cache.get_memory(k) {
            counters.cache_hits.fetch_add(1, Ordering::SeqCst);
            return Completion::ready(Ok(hit));
        }
        if cache.has_external() {
            // the external lookup is async, so this path enqueues from a task
            let (shared, tx, cache, k) = (shared.clone(), tx.clone(), cache.clone(), k.clone());
            return Completion(
                async move {
                    if let Some(hit) = cache.get(&k).await {
                        shared.counters.cache_hits.fetch_add(1, Ordering::SeqCst);
                        return Ok(hit);
                    }
                    shared.counters.cache_misses.fetch_add(1, Ordering::SeqCst);
                    Completion::waiting(enqueue(&shared, &tx, item, Some(k))).await
                }
                .boxed(),
            );
        }
    }
    counters.cache_misses.fetch_add(1, Ordering::SeqCst);
    Completion::waiting(enqueue(shared, tx, item, key))
}

fn enqueue<T>(
    shared: &Shared,
    tx: &mpsc::UnboundedSender<Job<T>>,
    item: T,
    key: Option<CacheKey>,
) -> oneshot::Receiver<Result<ScoredList>> {
    let (reply, rx) = oneshot::channel();
    shared.counters.queue_depth.fetch_add(1, Ordering::SeqCst);
    let job = Job {
        item,
        enqueued_at: Instant::now(),
        key,
        reply,
    };
    if let Err(mpsc::error::SendError(job)) = tx.send(job) {
        shared.counters.queue_depth.fetch_sub(1, Ordering::SeqCst);
        let _ = job.reply.send(Err(Error::EngineFailure("processor stopped".into())));
    }
    rx
}

async fn dispatch_loop<T: BatchItem>(mut rx: mpsc::UnboundedReceiver<Job<T>>, shared: Arc<Shared>, policy: BatchPolicy) {
    while let Some(first) = rx.recv().await {
        let deadline = first.enqueued_at + policy.max_wait;
        let mut batch = vec![first];
        while batch.len() < policy.batch_size {
            match rx.try_recv() {
                Ok(job) => {
                    batch.push(job);
                    continue;
                }
                Err(mpsc::error::TryRecvError::Disconnected) => break,
                Err(mpsc::error::TryRecvError::Empty) => {}
            }
            match tokio::time::timeout_at(deadline, rx.recv()).await {
                Ok(Some(job)) => batch.push(job),
                Ok(None) | Err(_) => break,
            }
        }
        shared.counters.queue_depth.fetch_sub(batch.len() as i64, Ordering::SeqCst);
        if shared.engine.overlapping_batches() {
            tokio::spawn(run_batch(shared.clone(), batch));
        } else {
            let _gate = shared.gate.lock().await;
            run_batch(shared.clone(), batch).await;
        }
    }
}

async fn run_batch<T: BatchItem>(shared: Arc<Shared>, batch: Vec<Job<T>>) {
    let counters = &shared.counters;
    counters.dispatched_batches.fetch_add(1, Ordering::SeqCst);
    counters.dispatched_requests.fetch_add(batch.len() as u64, Ordering::SeqCst);
    counters.engine_invocations.fetch_add(1, Ordering::SeqCst);
    debug!(engine = shared.engine.name(), size = batch.len(), "dispatching batch");

    let (items, meta): (Vec<T>, Vec<_>) = batch.into_iter().map(|j| (j.item, (j.key, j.reply))).unzip();
    let outcome = AssertUnwindSafe(T::run(shared.engine.as_ref(), &items))
        .catch_unwind()
        .await
        .unwrap_or_else(|_| Err(Error::EngineFailure(format!("engine {} panicked", shared.engine.name()))));
    let results: Vec<Result<ScoredList>> = match outcome {
        Ok(r) if r.len() == items.len() => r,
        Ok(r) => {
            let e = Error::EngineFailure(format!(
                "engine {} returned {} results for a batch of {}",
                shared.engine.name(),
                r.len(),
                items.len()
            ));
            vec![Err(e); items.len()]
        }
        Err(e) => vec![Err(e); items.len()],
    };
    for ((item, (key, reply)), result) in items.iter().zip(meta).zip(results) {
        let result = result.and_then(|list| list.truncate(item.limit()));
        if let (Ok(list), Some(cache), Some(key)) = (&result, &shared.cache, key) {
            cache.put(key, list.clone());
        }
        // the submitter may have given up; that is not our error
        let _ = reply.send(result);
    }
}
