use std::future::Future;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use tokio::net::TcpListener;
use tokio::time::Instant;
use tracing::{debug, info};

use super::node::Node;
use crate::engine::Candidate;
use crate::error::Error;
use crate::model::{Query, DEFAULT_LIMIT};
use crate::relay::{parse_hops, INBOUND_HOPS};
use crate::wire::{ContentRequest, ErrorBody, Op, QueryRequest, QueryResponse, HOPS_HEADER};

pub const DEFAULT_REWRITE_N: usize = 3;

/// HTTP status for an error, judged by its root cause.
pub fn status_for(error: &Error) -> StatusCode {
    match error.root() {
        Error::Lex { .. }
        | Error::Parse { .. }
        | Error::CapabilityMismatch { .. }
        | Error::Unsupported { .. }
        | Error::InvalidRequest(_)
        | Error::InvalidLimit(_)
        | Error::EmptyQuery
        | Error::EmptyInput
        | Error::EmptyCandidates
        | Error::DuplicateDocId(_)
        | Error::NonFiniteScore(_) => StatusCode::BAD_REQUEST,
        Error::UnknownService(_) | Error::UnknownCollection(_) | Error::DocumentNotFound { .. } => StatusCode::NOT_FOUND,
        Error::RelayTimeout { .. } => StatusCode::GATEWAY_TIMEOUT,
        Error::RelayTransport(_) | Error::RelayRemote(_) | Error::EndpointUnreachable { .. } => StatusCode::BAD_GATEWAY,
        Error::RelayHopLimit(_) => StatusCode::LOOP_DETECTED,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

/// An [`Error`] rendered as a JSON error body.
pub struct ApiError(pub Error);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        Self(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (status_for(&self.0), Json(ErrorBody::from(&self.0))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn decode<T: DeserializeOwned>(body: &[u8]) -> Result<T, Error> {
    serde_json::from_slice(body).map_err(|e| Error::InvalidRequest(format!("bad request body: {e}")))
}

fn require<T>(value: Option<T>, field: &str) -> Result<T, Error> {
    value.ok_or_else(|| Error::InvalidRequest(format!("missing field {field:?}")))
}

pub fn router(node: Arc<Node>) -> Router {
    Router::new()
        .route("/query", post(handle_query))
        .route("/content", post(handle_content))
        .route("/services", get(handle_services))
        .route("/health", get(|| async { Json(serde_json::json!({"status": "ok"})) }))
        .route("/stats", get(handle_stats))
        .route("/admin/reimport", post(handle_reimport))
        .with_state(node)
}

async fn handle_query(State(node): State<Arc<Node>>, headers: HeaderMap, body: Bytes) -> ApiResult<Response> {
    let started = Instant::now();
    let hops = parse_hops(headers.get(HOPS_HEADER).and_then(|v| v.to_str().ok()));
    let request: QueryRequest = decode(&body)?;
    debug!(?request.service, ?request.pipeline, hops, "query");
    let (mut response, status) = INBOUND_HOPS
        .scope(hops, answer(&node, request, hops))
        .await
        .map(|r| (r, StatusCode::OK))?;
    response.timing = started.elapsed().as_secs_f64() * 1000.0;
    Ok((status, Json(response)).into_response())
}

async fn answer(node: &Node, req: QueryRequest, hops: u32) -> Result<QueryResponse, Error> {
    let op = req.op.unwrap_or_default();
    let limit = req.limit.unwrap_or(DEFAULT_LIMIT);
    let make_query = |text: Option<String>| -> Result<Query, Error> {
        Ok(Query::new(require(text, "query")?, limit)?.with_relay_hops(hops))
    };
    let respond = |served_by: String, result| QueryResponse {
        result: Some(result),
        queries: None,
        timing: 0.0,
        served_by,
    };

    if op != Op::Search && req.pipeline.is_some() {
        return Err(Error::InvalidRequest(format!("op {op:?} needs \"service\", not \"pipeline\"")));
    }
    match op {
        Op::Search => match (req.service, req.pipeline) {
            (Some(service), None) => {
                let query = make_query(req.query)?;
                Ok(respond(service.clone(), node.search(&service, query).await?))
            }
            (None, Some(pipeline)) => {
                let query = make_query(req.query)?;
                let (canonical, list) = node
                    .run_pipeline(&pipeline, &query, req.collection.as_deref(), req.depth)
                    .await?;
                Ok(respond(canonical, list))
            }
            _ => Err(Error::InvalidRequest("give exactly one of \"service\" or \"pipeline\"".into())),
        },
        Op::Score => {
            let service = require(req.service, "service")?;
            let query = make_query(req.query)?;
            let candidates = require(req.candidates, "candidates")?
                .into_iter()
                .map(|c| Candidate::new(c.id, c.text))
                .collect();
            Ok(respond(service.clone(), node.score(&service, query, candidates).await?))
        }
        Op::Rewrite => {
            let service = require(req.service, "service")?;
            let query = make_query(req.query)?;
            let n = req.n.unwrap_or(DEFAULT_REWRITE_N);
            let variants = node.rewrite(&service, &query, n).await?;
            Ok(QueryResponse {
                result: None,
                queries: Some(variants.into_iter().map(|q| q.text().to_string()).collect()),
                timing: 0.0,
                served_by: service,
            })
        }
        Op::Fuse => {
            let service = require(req.service, "service")?;
            let lists = require(req.lists, "lists")?;
            let fused = node.fuse(&service, &lists).await?.truncate(limit)?;
            Ok(respond(service, fused))
        }
    }
}

async fn handle_content(State(node): State<Arc<Node>>, body: Bytes) -> ApiResult<Response> {
    let request: ContentRequest = decode(&body)?;
    let node2 = node.clone();
    let doc = tokio::task::spawn_blocking(move || node2.get_document(&request.collection, &request.id))
        .await
        .map_err(|e| Error::EngineFailure(format!("content task: {e}")))??;
    Ok(Json(doc).into_response())
}

async fn handle_services(State(node): State<Arc<Node>>) -> Response {
    Json(node.list_services()).into_response()
}

async fn handle_stats(State(node): State<Arc<Node>>) -> Response {
    Json(node.stats()).into_response()
}

async fn handle_reimport(State(node): State<Arc<Node>>) -> ApiResult<Response> {
    node.reimport().await?;
    Ok(Json(node.list_services()).into_response())
}

/// Serves `node` on an already-bound listener until `shutdown` resolves.
pub async fn serve_with_shutdown<F>(node: Arc<Node>, listener: TcpListener, shutdown: F) -> std::io::Result<()>
where
    F: Future<Output = ()> + Send + 'static,
{
    info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(node)).with_graceful_shutdown(shutdown).await
}

pub async fn serve(node: Arc<Node>, listener: TcpListener) -> std::io::Result<()> {
    serve_with_shutdown(node, listener, std::future::pending()).await
}

/// A node serving in the background; stops when dropped.
pub struct RunningServer {
    pub addr: SocketAddr,
    pub node: Arc<Node>,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    task: tokio::task::JoinHandle<std::io::Result<()>>,
}

impl RunningServer {
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub async fn shutdown(mut self) -> std::io::Result<()> {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        (&mut self.task).await.unwrap_or_else(|e| Err(std::io::Error::other(e)))
    }
}

impl Drop for RunningServer {
    fn drop(&mut self) {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
    }
}

/// Spawns `node` on `listener` in the current runtime.
pub fn spawn(node: Arc<Node>, listener: TcpListener) -> std::io::Result<RunningServer> {
    let addr = listener.local_addr()?;
    let (stop, rx) = tokio::sync::oneshot::channel();
    let task = tokio::spawn(serve_with_shutdown(node.clone(), listener, async move {
        let _ = rx.await;
    }));
    Ok(RunningServer {
        addr,
        node,
        stop: Some(stop),
        task,
    })
}
