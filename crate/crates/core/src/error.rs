use thiserror::Error;

use crate::model::{Capability, CapabilitySet};

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the serving stack can surface.
///
/// Errors are `Clone` because a single engine failure is fanned out to every
/// request that shared the failing batch.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("duplicate doc id {0:?} in ranked list")]
    DuplicateDocId(String),
    #[error("non-finite score for doc {0:?}")]
    NonFiniteScore(String),
    #[error("limit must be at least 1, got {0}")]
    InvalidLimit(usize),
    #[error("query text is empty")]
    EmptyQuery,
    #[error("invalid request: {0}")]
    InvalidRequest(String),

    #[error("unexpected character {fragment:?} at position {position}")]
    Lex { position: usize, fragment: String },
    #[error("parse error at position {position}: expected {}", expected.join(" or "))]
    Parse {
        position: usize,
        expected: Vec<String>,
    },

    #[error("unknown service {0:?}")]
    UnknownService(String),
    #[error("service {name:?} cannot {needed}: it declares {declared}")]
    CapabilityMismatch {
        name: String,
        needed: Capability,
        declared: CapabilitySet,
    },
    #[error("service {service:?} does not support {capability}")]
    Unsupported {
        service: String,
        capability: Capability,
    },
    #[error("engine failure: {0}")]
    EngineFailure(String),
    #[error("fusion needs at least one input list")]
    EmptyInput,
    #[error("reranking needs at least one candidate")]
    EmptyCandidates,

    #[error("unknown collection {0:?}")]
    UnknownCollection(String),
    #[error("document {doc_id:?} not found in collection {collection:?}")]
    DocumentNotFound { collection: String, doc_id: String },
    #[error("malformed JSON on line {line}: {detail}")]
    MalformedLine { line: usize, detail: String },
    #[error("line {line} has no string field {field:?}")]
    MissingIdField { line: usize, field: String },
    #[error("io error: {0}")]
    Io(String),

    #[error("config error: {0}")]
    Config(String),
    #[error("unknown engine kind {0:?}")]
    UnknownEngineKind(String),
    #[error(
        "`file_imports` is not supported: engines are registered at compile time \
         through EngineRegistry::register, or served from another node via `server_imports`"
    )]
    FileImportsUnsupported,

    #[error("relay to {endpoint} timed out")]
    RelayTimeout { endpoint: String },
    #[error("relay transport error: {0}")]
    RelayTransport(String),
    #[error("remote error: {0}")]
    RelayRemote(String),
    #[error("relay hop limit {0} exceeded")]
    RelayHopLimit(u32),
    #[error("endpoint {endpoint} unreachable: {detail}")]
    EndpointUnreachable { endpoint: String, detail: String },

    #[error("stage {name:?} at position {position}: {source}")]
    Stage {
        position: usize,
        name: String,
        source: Box<Error>,
    },
}

impl Error {
    /// Stable machine-readable code used in HTTP error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            Error::DuplicateDocId(_) => "DuplicateDocId",
            Error::NonFiniteScore(_) => "NonFiniteScore",
            Error::InvalidLimit(_) => "InvalidLimit",
            Error::EmptyQuery => "EmptyQuery",
            Error::InvalidRequest(_) => "InvalidRequest",
            Error::Lex { .. } => "LexError",
            Error::Parse { .. } => "ParseError",
            Error::UnknownService(_) => "UnknownService",
            Error::CapabilityMismatch { .. } => "CapabilityMismatch",
            Error::Unsupported { .. } => "Unsupported",
            Error::EngineFailure(_) => "EngineFailure",
            Error::EmptyInput => "EmptyInput",
            Error::EmptyCandidates => "EmptyCandidates",
            Error::UnknownCollection(_) => "UnknownCollection",
            Error::DocumentNotFound { .. } => "DocumentNotFound",
            Error::MalformedLine { .. } => "MalformedLine",
            Error::MissingIdField { .. } => "MissingIdField",
            Error::Io(_) => "IoError",
            Error::Config(_) => "ConfigError",
            Error::UnknownEngineKind(_) => "UnknownEngineKind",
            Error::FileImportsUnsupported => "FileImportsUnsupported",
            Error::RelayTimeout { .. } => "RelayTimeout",
            Error::RelayTransport(_) => "RelayTransportError",
            Error::RelayRemote(_) => "RelayRemoteError",
            Error::RelayHopLimit(_) => "RelayHopLimit",
            Error::EndpointUnreachable { .. } => "EndpointUnreachable",
            Error::Stage { source, .. } => source.code(),
        }
    }

    /// Strips any stage tagging and returns the underlying error.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    pub(crate) fn at_stage(self, position: usize, name: &str) -> Error {
        match self {
            // keep the innermost (most precise) position
            Error::Stage { .. } => self,
            other => Error::Stage {
                position,
                name: name.to_string(),
                source: Box::new(other),
            },
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
