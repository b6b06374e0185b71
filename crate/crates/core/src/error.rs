use std::path::PathBuf;
use std::time::Duration;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Protocol,
    Data,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("metric `{0}` is weighted in the objective but missing from the snapshot")]
    MissingMetric(&'static str),

    #[error("value out of domain: {0}")]
    Domain(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("baseline is zero; relative improvement is undefined")]
    ZeroBaseline,

    #[error("degenerate series: {0}")]
    DegenerateSeries(String),

    #[error(
        "deficiency selection needs per-example scores for at least {needed} ids but {available} \
         are available; run a per-example evaluation first"
    )]
    MissingScores { needed: usize, available: usize },

    #[error("learner returned no summary for example `{0}`")]
    MissingSummary(String),

    #[error("metric computation failed for example `{id}`: {source}")]
    ExampleMetric {
        id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("learner handshake timed out after {0:?}")]
    HandshakeTimeout(Duration),

    #[error("learner did not answer `{request}` within {timeout:?}")]
    RequestTimeout { request: String, timeout: Duration },

    #[error("protocol version mismatch: expected `{expected}`, learner speaks `{got}`")]
    VersionMismatch { expected: String, got: String },

    #[error("learner reported an error: {0}")]
    Learner(String),

    #[error("learner does not support `{0}`")]
    Unsupported(&'static str),

    #[error("unknown checkpoint token `{0}`")]
    UnknownCheckpoint(String),

    #[error("rollback at iteration {0} did not reproduce the retained state's summaries")]
    RollbackMismatch(u32),

    #[error("missing baseline in run directory {0}")]
    MissingBaseline(PathBuf),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::MissingMetric(_) | Error::MissingScores { .. } => {
                ErrorKind::Config
            }
            Error::Protocol(_)
            | Error::HandshakeTimeout(_)
            | Error::RequestTimeout { .. }
            | Error::VersionMismatch { .. }
            | Error::Learner(_)
            | Error::Unsupported(_)
            | Error::UnknownCheckpoint(_)
            | Error::RollbackMismatch(_) => ErrorKind::Protocol,
            Error::ExampleMetric { source, .. } => source.kind(),
            _ => ErrorKind::Data,
        }
    }

    pub(crate) fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }
}
