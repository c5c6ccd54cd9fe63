//! Forwarding engine: makes a service on another node addressable locally.
//!
//! Every query becomes its own `/query` request so the remote node's
//! processor can batch it with its own traffic. A `relay-hops` header counts
//! forwards; a relay refuses to forward past [`MAX_RELAY_HOPS`], which is what
//! breaks import cycles.

use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use futures::future::join_all;
use serde_json::Value;
use tokio::sync::Semaphore;
use tracing::{debug, warn};

use crate::engine::{BatchResult, Engine, ScoreRequest};
use crate::error::{Error, Result};
use crate::model::{Capability, CapabilitySet, Query, ScoredList, ServiceDescriptor};
use crate::wire::{ErrorBody, Op, QueryRequest, QueryResponse, ServiceEntry, WireCandidate, HOPS_HEADER};

pub const MAX_RELAY_HOPS: u32 = 4;
pub const DEFAULT_RELAY_TIMEOUT: Duration = Duration::from_secs(30);
pub const DEFAULT_MAX_IN_FLIGHT: usize = 64;

tokio::task_local! {
    /// Hop count of the inbound request being served, for operations whose
    /// arguments carry no [`Query`] (fusion).
    pub static INBOUND_HOPS: u32;
}

fn inbound_hops() -> u32 {
    INBOUND_HOPS.try_with(|h| *h).unwrap_or(0)
}

/// Normalizes `host:port` or `http://host:port/` to `http://host:port`.
pub fn normalize_endpoint(endpoint: &str) -> Result<String> {
    let trimmed = endpoint.trim();
    let url = if trimmed.contains("://") {
        trimmed.to_string()
    } else {
        format!("http://{trimmed}")
    };
    let url = match url.find("://") {
        Some(i) => format!("{}{}", &url[..i + 3], url[i + 3..].trim_end_matches('/')),
        None => url,
    };
    let parsed = reqwest::Url::parse(&url).map_err(|e| Error::Config(format!("bad endpoint {endpoint:?}: {e}")))?;
    if !matches!(parsed.scheme(), "http" | "https") || parsed.host_str().is_none() {
        return Err(Error::Config(format!("bad endpoint {endpoint:?}: need http(s)://host[:port]")));
    }
    Ok(url)
}

/// A remote service made local.
pub struct RelayEngine {
    local_name: String,
    endpoint: String,
    remote_service: String,
    capabilities: CapabilitySet,
    timeout: Duration,
    client: reqwest::Client,
    in_flight: Arc<Semaphore>,
}

impl RelayEngine {
    pub fn new(
        local_name: impl Into<String>,
        endpoint: &str,
        remote_service: impl Into<String>,
        capabilities: CapabilitySet,
        client: reqwest::Client,
    ) -> Result<Self> {
        Ok(Self {
            local_name: local_name.into(),
            endpoint: normalize_endpoint(endpoint)?,
            remote_service: remote_service.into(),
            capabilities,
            timeout: DEFAULT_RELAY_TIMEOUT,
            client,
            in_flight: Arc::new(Semaphore::new(DEFAULT_MAX_IN_FLIGHT)),
        })
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn with_max_in_flight(mut self, n: usize) -> Self {
        self.in_flight = Arc::new(Semaphore::new(n.max(1)));
        self
    }

    /// Builds a relay from a `"engine": "relay"` service entry. Config keys:
    /// `endpoint` (required), `service` (default: same name), `capabilities`
    /// (default `["search"]`), `timeout_ms`, `max_in_flight`.
    pub fn from_descriptor(d: &ServiceDescriptor, client: reqwest::Client) -> Result<Self> {
        let endpoint = d
            .config_str("endpoint")
            .ok_or_else(|| Error::Config(format!("service {:?}: relay needs config.endpoint", d.name)))?;
        let remote = d.config_str("service").unwrap_or(&d.name).to_string();
        let capabilities = match d.config.get("capabilities") {
            None => CapabilitySet::new([Capability::Search]),
            Some(v) => serde_json::from_value::<CapabilitySet>(v.clone())
                .map_err(|e| Error::Config(format!("service {:?}: capabilities: {e}", d.name)))?,
        };
        let mut relay = Self::new(&d.name, endpoint, remote, capabilities, client)?;
        if let Some(ms) = d.config_f64("timeout_ms")? {
            if ms.is_nan() || ms <= 0.0 {
                return Err(Error::Config(format!("service {:?}: timeout_ms must be > 0", d.name)));
            }
            relay = relay.with_timeout(Duration::from_secs_f64(ms / 1000.0));
        }
        if let Some(n) = d.config_f64("max_in_flight")? {
            relay = relay.with_max_in_flight(n as usize);
        }
        Ok(relay)
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    pub fn remote_service(&self) -> &str {
        &self.remote_service
    }

    async fn call(&self, mut body: QueryRequest, hops: u32) -> Result<QueryResponse> {
        let next = hops + 1;
        if next > MAX_RELAY_HOPS {
            return Err(Error::RelayHopLimit(MAX_RELAY_HOPS));
        }
        body.service = Some(self.remote_service.clone());
        let _permit = self.in_flight.acquire().await.expect("semaphore never closed");
        let url = format!("{}/query", self.endpoint);
        debug!(%url, service = %self.remote_service, hops = next, "relaying");
        let exchange = async {
            let resp = self
                .client
                .post(&url)
                .header(HOPS_HEADER, next.to_string())
                .json(&body)
                .send()
                .await
                .map_err(|e| Error::RelayTransport(format!("{url}: {e}")))?;
            let status = resp.status();
            let bytes = resp
                .bytes()
                .await
                .map_err(|e| Error::RelayTransport(format!("{url}: {e}")))?;
            Ok::<_, Error>((status, bytes))
        };
        let (status, bytes) = tokio::time::timeout(self.timeout, exchange)
            .await
            .map_err(|_| Error::RelayTimeout {
                endpoint: self.endpoint.clone(),
            })??;
        if !status.is_success() {
            return Err(self.remote_error(status, &bytes));
        }
        serde_json::from_slice::<QueryResponse>(&bytes)
            .map_err(|e| Error::RelayRemote(format!("malformed response from {url}: {e}")))
    }

    /// Maps an error payload back onto local error kinds where the meaning is
    /// the same on both sides, so relayed services fail like local ones.
    fn remote_error(&self, status: reqwest::StatusCode, bytes: &[u8]) -> Error {
        let Ok(body) = serde_json::from_slice::<ErrorBody>(bytes) else {
            return Error::RelayRemote(format!(
                "HTTP {status} from {}: {}",
                self.endpoint,
                String::from_utf8_lossy(bytes)
            ));
        };
        match body.code.as_str() {
            "RelayHopLimit" => Error::RelayHopLimit(MAX_RELAY_HOPS),
            "Unsupported" => {
                // the remote names the capability in its detail; recover it
                let capability = Capability::ALL
                    .into_iter()
                    .find(|c| body.detail.ends_with(c.as_str()))
                    .unwrap_or(Capability::Search);
                Error::Unsupported {
                    service: self.local_name.clone(),
                    capability,
                }
            }
            _ => Error::RelayRemote(format!("{}: {}", body.code, body.detail)),
        }
    }

    fn expect_result(&self, resp: QueryResponse) -> Result<ScoredList> {
        resp.result
            .ok_or_else(|| Error::RelayRemote(format!("response from {} has no result", self.endpoint)))
    }

    async fn search_one(&self, q: &Query) -> Result<ScoredList> {
        let body = QueryRequest {
            query: Some(q.text().to_string()),
            limit: Some(q.limit()),
            ..QueryRequest::default()
        };
        let list = self.expect_result(self.call(body, q.relay_hops()).await?)?;
        list.truncate(q.limit())
    }

    async fn score_one(&self, r: &ScoreRequest) -> Result<ScoredList> {
        let body = QueryRequest {
            op: Some(Op::Score),
            query: Some(r.query.text().to_string()),
            limit: Some(r.query.limit()),
            candidates: Some(
                r.candidates
                    .iter()
                    .map(|c| WireCandidate {
                        id: c.doc_id.clone(),
                        text: c.text.clone(),
                    })
                    .collect(),
            ),
            ..QueryRequest::default()
        };
        self.expect_result(self.call(body, r.query.relay_hops()).await?)
    }
}

#[async_trait]
impl Engine for RelayEngine {
    fn name(&self) -> &str {
        &self.local_name
    }

    fn capabilities(&self) -> CapabilitySet {
        self.capabilities
    }

    fn overlapping_batches(&self) -> bool {
        true
    }

    async fn search_batch(&self, queries: &[Query]) -> BatchResult<ScoredList> {
        if !self.capabilities.contains(Capability::Search) {
            return Err(self.unsupported(Capability::Search));
        }
        Ok(join_all(queries.iter().map(|q| self.search_one(q))).await)
    }

    async fn score_batch(&self, requests: &[ScoreRequest]) -> BatchResult<ScoredList> {
        if !self.capabilities.contains(Capability::Score) {
            return Err(self.unsupported(Capability::Score));
        }
        Ok(join_all(requests.iter().map(|r| self.score_one(r))).await)
    }

    async fn rewrite(&self, query: &Query, n: usize) -> Result<Vec<Query>> {
        if !self.capabilities.contains(Capability::Rewrite) {
            return Err(self.unsupported(Capability::Rewrite));
        }
        let body = QueryRequest {
            op: Some(Op::Rewrite),
            query: Some(query.text().to_string()),
            limit: Some(query.limit()),
            n: Some(n),
            ..QueryRequest::default()
        };
        let resp = self.call(body, query.relay_hops()).await?;
        let texts = resp
            .queries
            .ok_or_else(|| Error::RelayRemote(format!("response from {} has no queries", self.endpoint)))?;
        texts.into_iter().map(|t| query.with_text(t)).collect()
    }

    async fn fuse(&self, lists: &[ScoredList]) -> Result<ScoredList> {
        if !self.capabilities.contains(Capability::Fuse) {
            return Err(self.unsupported(Capability::Fuse));
        }
        let body = QueryRequest {
            op: Some(Op::Fuse),
            lists: Some(lists.to_vec()),
            ..QueryRequest::default()
        };
        self.expect_result(self.call(body, inbound_hops()).await?)
    }
}

/// Lists the services of a remote node and wraps each one as a relay with
/// the same name and capabilities.
pub async fn import_services(endpoint: &str, client: &reqwest::Client, timeout: Duration) -> Result<Vec<RelayEngine>> {
    let base = normalize_endpoint(endpoint)?;
    let url = format!("{base}/services");
    let unreachable = |detail: String| Error::EndpointUnreachable {
        endpoint: base.clone(),
        detail,
    };
    let fetch = async {
        let resp = client.get(&url).send().await.map_err(|e| unreachable(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(unreachable(format!("HTTP {}", resp.status())));
        }
        resp.json::<Vec<ServiceEntry>>()
            .await
            .map_err(|e| unreachable(format!("bad service listing: {e}")))
    };
    let entries = tokio::time::timeout(timeout, fetch)
        .await
        .map_err(|_| unreachable("timed out".into()))??;
    entries
        .into_iter()
        .map(|e| {
            RelayEngine::new(&e.name, &base, &e.name, e.capabilities, client.clone()).map(|r| r.with_timeout(timeout))
        })
        .collect()
}

/// [`import_services`] with the default degradation: an unreachable
/// endpoint logs a warning and contributes nothing.
pub async fn import_or_warn(endpoint: &str, client: &reqwest::Client, timeout: Duration) -> Vec<RelayEngine> {
    match import_services(endpoint, client, timeout).await {
        Ok(v) => v,
        Err(e) => {
            warn!(endpoint, error = %e, "server import failed; continuing without it");
            Vec::new()
        }
    }
}

/// Parses the hop header of an inbound request; absent or garbled means 0.
pub fn parse_hops(value: Option<&str>) -> u32 {
    value.and_then(|v| v.trim().parse().ok()).unwrap_or(0)
}

/// Service descriptor used when registering an imported relay.
pub fn descriptor_for_import(relay: &RelayEngine) -> ServiceDescriptor {
    // forwards immediately: the remote node does the batching
    ServiceDescriptor::new(relay.name(), "relay")
        .with_batching(crate::model::DEFAULT_BATCH_SIZE * 4, Duration::ZERO)
        .with_config("endpoint", Value::String(relay.endpoint.clone()))
        .with_config("service", Value::String(relay.remote_service.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoint_normalization() {
        assert_eq!(normalize_endpoint("127.0.0.1:8080").unwrap(), "http://127.0.0.1:8080");
        assert_eq!(normalize_endpoint("http://h:1/").unwrap(), "http://h:1");
        assert!(normalize_endpoint("ftp://h:1").is_err());
        assert!(normalize_endpoint("http://").is_err());
    }

    #[test]
    fn descriptor_config() {
        let d = ServiceDescriptor::new("remote-bm25", "relay")
            .with_config("endpoint", "127.0.0.1:9".into())
            .with_config("capabilities", serde_json::json!(["search", "score"]))
            .with_config("timeout_ms", 5.into());
        let r = RelayEngine::from_descriptor(&d, reqwest::Client::new()).unwrap();
        assert_eq!(r.remote_service(), "remote-bm25");
        assert_eq!(r.capabilities(), CapabilitySet::new([Capability::Search, Capability::Score]));
        assert_eq!(r.timeout, Duration::from_millis(5));

        let missing = ServiceDescriptor::new("x", "relay");
        assert!(matches!(RelayEngine::from_descriptor(&missing, reqwest::Client::new()), Err(Error::Config(_))));
    }

    #[test]
    fn hop_header_parsing() {
        assert_eq!(parse_hops(None), 0);
        assert_eq!(parse_hops(Some("3")), 3);
        assert_eq!(parse_hops(Some("junk")), 0);
    }

    #[tokio::test]
    async fn refuses_past_hop_cap_without_network() {
        let r = RelayEngine::new("r", "127.0.0.1:9", "r", CapabilitySet::new([Capability::Search]), reqwest::Client::new()).unwrap();
        let q = Query::new("x", 3).unwrap().with_relay_hops(MAX_RELAY_HOPS);
        let out = r.search_batch(&[q]).await.unwrap();
        assert_eq!(out[0], Err(Error::RelayHopLimit(MAX_RELAY_HOPS)));
    }

    #[tokio::test]
    async fn undeclared_capability_is_rejected_locally() {
        let r = RelayEngine::new("r", "127.0.0.1:9", "r", CapabilitySet::new([Capability::Search]), reqwest::Client::new()).unwrap();
        assert!(matches!(r.fuse(&[]).await, Err(Error::Unsupported { capability: Capability::Fuse, .. })));
    }

    #[tokio::test]
    async fn unreachable_import_degrades() {
        let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        let ep = format!("127.0.0.1:{port}");
        let client = reqwest::Client::new();
        assert!(matches!(
            import_services(&ep, &client, Duration::from_secs(2)).await,
            Err(Error::EndpointUnreachable { .. })
        ));
        assert!(import_or_warn(&ep, &client, Duration::from_secs(2)).await.is_empty());
    }
}
