//! Corpora, instrumented engines and in-process nodes for integration tests.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use async_trait::async_trait;
use pipeserve_core::engine::{BatchResult, Engine, EngineRegistry, LexicalReranker, ScoreRequest};
use pipeserve_core::gateway::{self, Node, RunningServer, ServerConfig};
use pipeserve_core::{Capability, CapabilitySet, Query, Result, ScoredList};
use rand::seq::SliceRandom;
use rand::Rng;

pub const VOCAB: &[&str] = &[
    "machu", "picchu", "peru", "llama", "andes", "inca", "taiwan", "island", "tower", "paris", "river", "mountain",
    "valley", "city", "temple", "stone", "road", "coast", "forest", "desert", "snow", "harbor", "bridge", "market",
    "東京", "café", "naïve", "straße",
];

/// Random documents `d0..d{n-1}` of 1 to 12 words from [`VOCAB`].
pub fn random_corpus<R: Rng>(rng: &mut R, n: usize) -> Vec<(String, String)> {
    (0..n)
        .map(|i| {
            let len = rng.gen_range(1..=12);
            let words: Vec<&str> = (0..len).map(|_| *VOCAB.choose(rng).unwrap()).collect();
            (format!("d{i}"), words.join(" "))
        })
        .collect()
}

/// 1 to `max_terms` words, mostly from the vocabulary, sometimes unseen.
pub fn random_query<R: Rng>(rng: &mut R, max_terms: usize) -> String {
    let len = rng.gen_range(1..=max_terms);
    (0..len)
        .map(|_| {
            if rng.gen_bool(0.1) {
                "zzunseen".to_string()
            } else {
                VOCAB.choose(rng).unwrap().to_string()
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn write_jsonl(dir: &Path, name: &str, docs: &[(String, String)]) -> PathBuf {
    let path = dir.join(name);
    let mut f = std::io::BufWriter::new(std::fs::File::create(&path).unwrap());
    for (id, text) in docs {
        writeln!(f, "{}", serde_json::json!({"id": id, "text": text})).unwrap();
    }
    f.flush().unwrap();
    path
}

/// The three-document corpus used throughout the examples.
pub fn tiny_corpus() -> Vec<(String, String)> {
    [
        ("d1", "machu picchu is an inca citadel in peru"),
        ("d2", "llamas live in peru and the andes"),
        ("d3", "the eiffel tower is in paris"),
    ]
    .iter()
    .map(|(a, b)| (a.to_string(), b.to_string()))
    .collect()
}

/// Search engine with a fixed cost per batch, whatever its size. Returns a
/// deterministic list derived from the query text and records when each
/// batch arrived.
pub struct FixedCostEngine {
    pub cost: Duration,
    pub batches: Mutex<Vec<(Instant, Vec<String>)>>,
}

impl FixedCostEngine {
    pub fn new(cost: Duration) -> Arc<Self> {
        Arc::new(Self {
            cost,
            batches: Mutex::new(Vec::new()),
        })
    }

    pub fn answer(q: &Query) -> ScoredList {
        let seed: u64 = q.text().bytes().fold(7, |h, b| h.wrapping_mul(31).wrapping_add(b as u64));
        ScoredList::from_entries((0..q.limit() as u64).map(|i| {
            (format!("doc{}", (seed.wrapping_add(i * 7919)) % 1000), ((seed >> 8) % 97 + i) as f64 / 3.0)
        }))
        .unwrap()
    }
}

#[async_trait]
impl Engine for FixedCostEngine {
    fn name(&self) -> &str {
        "fixed"
    }

    fn capabilities(&self) -> CapabilitySet {
        CapabilitySet::new([Capability::Search])
    }

    async fn search_batch(&self, queries: &[Query]) -> BatchResult<ScoredList> {
        self.batches
            .lock()
            .unwrap()
            .push((Instant::now(), queries.iter().map(|q| q.text().to_string()).collect()));
        tokio::time::sleep(self.cost).await;
        Ok(queries.iter().map(|q| Ok(Self::answer(q))).collect())
    }
}

/// Lexical reranker that records the candidate ids it is given.
pub struct RecordingScorer {
    pub inner: LexicalReranker,
    pub seen: Mutex<Vec<Vec<String>>>,
}

#[async_trait]
impl Engine for RecordingScorer {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn capabilities(&self) -> CapabilitySet {
        self.inner.capabilities()
    }

    async fn score_batch(&self, requests: &[ScoreRequest]) -> BatchResult<ScoredList> {
        for r in requests {
            self.seen
                .lock()
                .unwrap()
                .push(r.candidates.iter().map(|c| c.doc_id.clone()).collect());
        }
        self.inner.score_batch(requests).await
    }
}

/// RRF fuser that records how many lists each call fused.
pub struct RecordingFuser {
    pub name: String,
    pub seen: Mutex<Vec<usize>>,
}

#[async_trait]
impl Engine for RecordingFuser {
    fn name(&self) -> &str {
        &self.name
    }

    fn capabilities(&self) -> CapabilitySet {
        CapabilitySet::new([Capability::Fuse])
    }

    async fn fuse(&self, lists: &[ScoredList]) -> Result<ScoredList> {
        self.seen.lock().unwrap().push(lists.len());
        pipeserve_core::engine::reciprocal_rank_fusion(lists, 60.0)
    }
}

/// Registers an engine instance under `kind`: every service of that kind
/// shares the instance.
pub fn register_instance(registry: &mut EngineRegistry, kind: &str, engine: Arc<dyn Engine>) {
    registry.register(kind, move |_, _| Ok(engine.clone()));
}

pub async fn bind() -> tokio::net::TcpListener {
    tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap()
}

pub async fn start_server(config: ServerConfig, registry: EngineRegistry) -> RunningServer {
    let listener = bind().await;
    let node = Node::start(config, registry).await.unwrap();
    gateway::spawn(node, listener).unwrap()
}

pub async fn post_json(client: &reqwest::Client, url: &str, body: &serde_json::Value) -> (u16, Vec<u8>) {
    let resp = client.post(url).json(body).send().await.unwrap();
    let status = resp.status().as_u16();
    (status, resp.bytes().await.unwrap().to_vec())
}

pub fn json(bytes: &[u8]) -> serde_json::Value {
    serde_json::from_slice(bytes).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(bytes)))
}

/// A `/query` response body with its wall-clock `timing` field removed.
pub fn without_timing(bytes: &[u8]) -> String {
    let mut v = json(bytes);
    v.as_object_mut().unwrap().remove("timing");
    serde_json::to_string(&v).unwrap()
}

/// The `result` object of a `/query` response as ordered pairs.
pub fn result_pairs(bytes: &[u8]) -> Vec<(String, f64)> {
    json(bytes)["result"]
        .as_object()
        .unwrap()
        .iter()
        .map(|(k, v)| (k.clone(), v.as_f64().unwrap()))
        .collect()
}

/// In-process key-value server speaking just enough RESP for GET and SET.
pub mod resp_server {
    use std::collections::HashMap;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::{Arc, Mutex};

    use tokio::io::{AsyncBufReadExt, AsyncReadExt, AsyncWriteExt, BufStream};

    #[derive(Default)]
    pub struct Store {
        pub data: Mutex<HashMap<String, String>>,
        pub gets: AtomicUsize,
        pub sets: AtomicUsize,
    }

    async fn read_command(conn: &mut BufStream<tokio::net::TcpStream>) -> Option<Vec<String>> {
        let mut line = String::new();
        conn.read_line(&mut line).await.ok()?;
        let n: usize = line.trim_end().strip_prefix('*')?.parse().ok()?;
        let mut args = Vec::with_capacity(n);
        for _ in 0..n {
            line.clear();
            conn.read_line(&mut line).await.ok()?;
            let len: usize = line.trim_end().strip_prefix('$')?.parse().ok()?;
            let mut buf = vec![0u8; len + 2];
            conn.read_exact(&mut buf).await.ok()?;
            buf.truncate(len);
            args.push(String::from_utf8(buf).ok()?);
        }
        Some(args)
    }

    pub async fn spawn() -> (String, Arc<Store>) {
        let listener = super::bind().await;
        let addr = listener.local_addr().unwrap().to_string();
        let store = Arc::new(Store::default());
        let s = store.clone();
        tokio::spawn(async move {
            while let Ok((sock, _)) = listener.accept().await {
                let s = s.clone();
                tokio::spawn(async move {
                    let mut conn = BufStream::new(sock);
                    while let Some(args) = read_command(&mut conn).await {
                        let reply = match args[0].to_ascii_uppercase().as_str() {
                            "GET" => {
                                s.gets.fetch_add(1, Ordering::SeqCst);
                                match s.data.lock().unwrap().get(&args[1]) {
                                    Some(v) => format!("${}\r\n{v}\r\n", v.len()),
                                    None => "$-1\r\n".into(),
                                }
                            }
                            "SET" => {
                                s.sets.fetch_add(1, Ordering::SeqCst);
                                s.data.lock().unwrap().insert(args[1].clone(), args[2].clone());
                                "+OK\r\n".into()
                            }
                            _ => "-ERR unknown\r\n".into(),
                        };
                        if conn.write_all(reply.as_bytes()).await.is_err() || conn.flush().await.is_err() {
                            return;
                        }
                    }
                });
            }
        });
        (addr, store)
    }
}

/// A local port with nothing listening on it.
pub fn closed_port() -> u16 {
    std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}
