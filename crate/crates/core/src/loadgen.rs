//! Load generator: batched (concurrent) throughput and sequential latency
//! runs against a node's `/query` endpoint.
//!
//! Only `/query` is timed; document fetches through `/content` are not part
//! of a run.

use std::fmt;
use std::path::Path;
use std::time::Duration;

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use tokio::time::Instant;
use tracing::warn;

use crate::error::{Error, Result};
use crate::wire::QueryRequest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Batched,
    Sequential,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Batched => "batched",
            Mode::Sequential => "sequential",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "batched" => Ok(Mode::Batched),
            "sequential" => Ok(Mode::Sequential),
            other => Err(Error::InvalidRequest(format!("unknown mode {other:?}"))),
        }
    }
}

/// What each plain-text query is sent to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Target {
    Service(String),
    Pipeline { pipeline: String, collection: Option<String> },
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub endpoint: String,
    pub target: Target,
    pub limit: Option<usize>,
    /// Cap on in-flight requests in batched mode; `None` sends everything
    /// at once.
    pub concurrency: Option<usize>,
    /// Appends a unique token to every query so no cache can answer it.
    pub bust_cache: bool,
    pub timeout: Duration,
}

impl BenchConfig {
    pub fn new(endpoint: impl Into<String>, target: Target) -> Self {
        Self {
            endpoint: endpoint.into(),
            target,
            limit: None,
            concurrency: None,
            bust_cache: false,
            timeout: Duration::from_secs(120),
        }
    }
}

/// One line of the raw per-request log. Times are seconds since the run
/// started.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestRecord {
    pub index: usize,
    pub query: String,
    pub send_s: f64,
    pub receive_s: f64,
    /// HTTP status, or 0 when no response arrived.
    pub status: u16,
}

impl RequestRecord {
    pub fn latency(&self) -> f64 {
        self.receive_s - self.send_s
    }

    pub fn ok(&self) -> bool {
        self.status == 200
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub mode: Mode,
    pub query_count: usize,
    /// Seconds from the first send to the last receive.
    pub wall_time: f64,
    /// Queries per second: `query_count / wall_time`.
    pub throughput: f64,
    /// Seconds per query.
    pub mean_latency: f64,
    pub p50: f64,
    pub p90: f64,
    pub p99: f64,
    pub error_count: usize,
    pub errors: Vec<String>,
}

/// Nearest-rank percentile of an ascending slice.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

impl BenchReport {
    /// Every number in the report is a function of the records alone.
    pub fn from_records(mode: Mode, records: &[RequestRecord]) -> Self {
        let n = records.len();
        let mut latencies: Vec<f64> = records.iter().map(RequestRecord::latency).collect();
        latencies.sort_by(f64::total_cmp);
        let wall_time = if n == 0 {
            0.0
        } else {
            let first = records.iter().map(|r| r.send_s).fold(f64::INFINITY, f64::min);
            let last = records.iter().map(|r| r.receive_s).fold(f64::NEG_INFINITY, f64::max);
            last - first
        };
        let errors: Vec<String> = records
            .iter()
            .filter(|r| !r.ok())
            .map(|r| format!("#{} {:?}: status {}", r.index, r.query, r.status))
            .collect();
        Self {
            mode,
            query_count: n,
            wall_time,
            throughput: if wall_time > 0.0 { n as f64 / wall_time } else { 0.0 },
            mean_latency: if n == 0 { 0.0 } else { latencies.iter().sum::<f64>() / n as f64 },
            p50: percentile(&latencies, 50.0),
            p90: percentile(&latencies, 90.0),
            p99: percentile(&latencies, 99.0),
            error_count: errors.len(),
            errors,
        }
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let rows: [(&str, String); 9] = [
            ("mode", self.mode.to_string()),
            ("queries", self.query_count.to_string()),
            ("wall time (s)", format!("{:.4}", self.wall_time)),
            ("throughput (q/s)", format!("{:.2}", self.throughput)),
            ("mean latency (s/q)", format!("{:.4}", self.mean_latency)),
            ("p50 (s)", format!("{:.4}", self.p50)),
            ("p90 (s)", format!("{:.4}", self.p90)),
            ("p99 (s)", format!("{:.4}", self.p99)),
            ("errors", self.error_count.to_string()),
        ];
        for (k, v) in rows {
            out.push_str(&format!("{k:<20} {v:>12}\n"));
        }
        for e in &self.errors {
            out.push_str(&format!("  {e}\n"));
        }
        out
    }
}

/// A loaded query file entry: plain text, or a full request body.
#[derive(Debug, Clone, PartialEq)]
pub enum QueryLine {
    Text(String),
    Body(QueryRequest),
}

/// One query per line, or one JSON request body per line. Blank lines are
/// skipped.
pub fn parse_queries(raw: &str) -> Result<Vec<QueryLine>> {
    raw.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let t = l.trim();
            if t.starts_with('{') {
                serde_json::from_str(t)
                    .map(QueryLine::Body)
                    .map_err(|e| Error::InvalidRequest(format!("queries line {}: {e}", i + 1)))
            } else {
                Ok(QueryLine::Text(t.to_string()))
            }
        })
        .collect()
}

pub fn load_queries(path: &Path) -> Result<Vec<QueryLine>> {
    parse_queries(&std::fs::read_to_string(path)?)
}

fn build_body(config: &BenchConfig, line: &QueryLine, index: usize, nonce: u64) -> QueryRequest {
    let mut body = match line {
        QueryLine::Body(b) => b.clone(),
        QueryLine::Text(t) => QueryRequest {
            query: Some(t.clone()),
            ..QueryRequest::default()
        },
    };
    if body.service.is_none() && body.pipeline.is_none() {
        match &config.target {
            Target::Service(s) => body.service = Some(s.clone()),
            Target::Pipeline { pipeline, collection } => {
                body.pipeline = Some(pipeline.clone());
                if body.collection.is_none() {
                    body.collection = collection.clone();
                }
            }
        }
    }
    if body.limit.is_none() {
        body.limit = config.limit;
    }
    if config.bust_cache {
        // a token no corpus contains, unique per run and query
        let text = body.query.take().unwrap_or_default();
        body.query = Some(format!("{text} zqnonce{nonce:x}q{index}"));
    }
    body
}

async fn send_one(
    client: &reqwest::Client,
    url: &str,
    start: Instant,
    index: usize,
    body: QueryRequest,
) -> RequestRecord {
    let query = body.query.clone().unwrap_or_default();
    let send_s = start.elapsed().as_secs_f64();
    let status = match client.post(url).json(&body).send().await {
        Ok(resp) => {
            let status = resp.status().as_u16();
            // the body is part of the response time
            match resp.bytes().await {
                Ok(_) => status,
                Err(_) => 0,
            }
        }
        Err(_) => 0,
    };
    RequestRecord {
        index,
        query,
        send_s,
        receive_s: start.elapsed().as_secs_f64(),
        status,
    }
}

/// Runs one benchmark and returns the report plus the raw records.
pub async fn run(config: &BenchConfig, mode: Mode, queries: &[QueryLine]) -> Result<(BenchReport, Vec<RequestRecord>)> {
    if queries.is_empty() {
        warn!("query file is empty; nothing to send");
        return Ok((BenchReport::from_records(mode, &[]), Vec::new()));
    }
    let base = crate::relay::normalize_endpoint(&config.endpoint)?;
    let url = format!("{base}/query");
    let client = reqwest::Client::builder()
        .timeout(config.timeout)
        .build()
        .map_err(|e| Error::Config(format!("http client: {e}")))?;
    let nonce = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_nanos() as u64)
        .unwrap_or(0);
    let bodies: Vec<QueryRequest> = queries
        .iter()
        .enumerate()
        .map(|(i, q)| build_body(config, q, i, nonce))
        .collect();

    let start = Instant::now();
    let mut records = match mode {
        Mode::Sequential => {
            let mut out = Vec::with_capacity(bodies.len());
            for (i, b) in bodies.into_iter().enumerate() {
                out.push(send_one(&client, &url, start, i, b).await);
            }
            out
        }
        Mode::Batched => {
            let limit = config.concurrency.unwrap_or(bodies.len()).max(1);
            stream::iter(bodies.into_iter().enumerate())
                .map(|(i, b)| send_one(&client, &url, start, i, b))
                .buffer_unordered(limit)
                .collect::<Vec<_>>()
                .await
        }
    };
    records.sort_by_key(|r| r.index);
    Ok((BenchReport::from_records(mode, &records), records))
}

pub fn write_log(path: &Path, records: &[RequestRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(e.to_string()))?;
    for r in records {
        w.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_log(path: &Path) -> Result<Vec<RequestRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Io(e.to_string()))?;
    r.deserialize()
        .map(|row| row.map_err(|e| Error::Io(e.to_string())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(index: usize, send_s: f64, receive_s: f64, status: u16) -> RequestRecord {
        RequestRecord {
            index,
            query: format!("q{index}"),
            send_s,
            receive_s,
            status,
        }
    }

    #[test]
    fn nearest_rank_percentiles() {
        let xs: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(percentile(&xs, 50.0), 50.0);
        assert_eq!(percentile(&xs, 90.0), 90.0);
        assert_eq!(percentile(&xs, 99.0), 99.0);
        assert_eq!(percentile(&[7.0], 99.0), 7.0);
        assert_eq!(percentile(&[], 50.0), 0.0);
    }

    #[test]
    fn report_arithmetic() {
        let records = [rec(0, 0.0, 0.5, 200), rec(1, 0.1, 0.3, 200), rec(2, 0.2, 1.0, 500)];
        let r = BenchReport::from_records(Mode::Batched, &records);
        assert_eq!(r.query_count, 3);
        assert_eq!(r.wall_time, 1.0);
        assert_eq!(r.throughput, 3.0);
        let mean = (0.5 + (0.3 - 0.1) + (1.0 - 0.2)) / 3.0;
        assert!((r.mean_latency - mean).abs() < 1e-15);
        assert_eq!(r.error_count, 1);
    }

    #[test]
    fn single_query_throughput_is_inverse_wall_time() {
        let r = BenchReport::from_records(Mode::Sequential, &[rec(0, 0.25, 0.75, 200)]);
        assert_eq!(r.throughput, 1.0 / r.wall_time);
        assert_eq!(r.mean_latency, r.wall_time);
    }

    #[test]
    fn empty_run() {
        let r = BenchReport::from_records(Mode::Sequential, &[]);
        assert_eq!((r.query_count, r.error_count), (0, 0));
        assert_eq!(r.throughput, 0.0);
    }

    #[test]
    fn log_round_trip_reproduces_report() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.csv");
        let records = vec![rec(0, 0.0, 0.123456789012345, 200), rec(1, 1e-9, 0.2 + 0.1, 200)];
        write_log(&path, &records).unwrap();
        let back = read_log(&path).unwrap();
        assert_eq!(back, records);
        assert_eq!(
            BenchReport::from_records(Mode::Batched, &back),
            BenchReport::from_records(Mode::Batched, &records)
        );
    }

    #[test]
    fn query_file_formats() {
        let raw = "where is machu picchu\n\n{\"service\": \"x\", \"query\": \"q\", \"limit\": 5}\n";
        let lines = parse_queries(raw).unwrap();
        assert_eq!(lines[0], QueryLine::Text("where is machu picchu".into()));
        assert_eq!(lines[1], QueryLine::Body(QueryRequest::service("x", "q", 5)));
        assert!(parse_queries("{not json").is_err());
    }

    #[test]
    fn body_building() {
        let mut c = BenchConfig::new(
            "h:1",
            Target::Pipeline {
                pipeline: "a>>b".into(),
                collection: Some("c".into()),
            },
        );
        c.limit = Some(7);
        let b = build_body(&c, &QueryLine::Text("q".into()), 3, 0xab);
        assert_eq!(b.pipeline.as_deref(), Some("a>>b"));
        assert_eq!(b.collection.as_deref(), Some("c"));
        assert_eq!(b.limit, Some(7));
        c.bust_cache = true;
        let b1 = build_body(&c, &QueryLine::Text("q".into()), 3, 0xab);
        let b2 = build_body(&c, &QueryLine::Text("q".into()), 4, 0xab);
        assert_ne!(b1.query, b2.query);
        assert!(b1.query.unwrap().starts_with("q "));
    }
}
