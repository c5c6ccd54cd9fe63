//! JSON bodies exchanged over HTTP, shared by the gateway (server side) and
//! the relay and load generator (client side).

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::model::{CapabilitySet, ScoredList};

pub const HOPS_HEADER: &str = "relay-hops";

/// What a `/query` call asks the named service to do. Plain clients only
/// ever use `search`; the other three exist so relays can forward every
/// capability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Op {
    #[default]
    Search,
    Score,
    Rewrite,
    Fuse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireCandidate {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub service: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pipeline: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub collection: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub op: Option<Op>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidates: Option<Vec<WireCandidate>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lists: Option<Vec<ScoredList>>,
}

impl QueryRequest {
    pub fn service(name: impl Into<String>, query: impl Into<String>, limit: usize) -> Self {
        Self {
            service: Some(name.into()),
            query: Some(query.into()),
            limit: Some(limit),
            ..Self::default()
        }
    }

    pub fn pipeline(pipeline: impl Into<String>, query: impl Into<String>, limit: usize) -> Self {
        Self {
            pipeline: Some(pipeline.into()),
            query: Some(query.into()),
            limit: Some(limit),
            ..Self::default()
        }
    }

    pub fn with_collection(mut self, collection: impl Into<String>) -> Self {
        self.collection = Some(collection.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResponse {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<ScoredList>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub queries: Option<Vec<String>>,
    /// Elapsed milliseconds on the serving node.
    pub timing: f64,
    pub served_by: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContentRequest {
    pub collection: String,
    pub id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Local,
    Relayed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceEntry {
    pub name: String,
    pub capabilities: CapabilitySet,
    pub origin: Origin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub detail: String,
    /// Byte offset into the canonical pipeline string, when the error is
    /// tied to a stage or a parse position.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<usize>,
}

impl From<&Error> for ErrorBody {
    fn from(e: &Error) -> Self {
        let position = match e {
            Error::Stage { position, .. } => Some(*position),
            Error::Lex { position, .. } | Error::Parse { position, .. } => Some(*position),
            _ => None,
        };
        Self {
            code: e.code().to_string(),
            detail: e.to_string(),
            position,
        }
    }
}
