use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at {path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("unknown node {0}")]
    UnknownNode(String),

    #[error("node {node} has no neighbors of type {edge}")]
    NoNeighbors { node: String, edge: String },

    #[error("seed keyword(s) missing from corpus vocabulary: {0}")]
    MissingSeedKeyword(String),

    #[error("unknown meta-path {0}")]
    UnknownMetaPath(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("classifier for node {0} is not trained")]
    Untrained(String),

    #[error("unknown label id {0}")]
    UnknownLabel(String),

    #[error("missing artifact {path}; run `{stage}` first")]
    MissingStage { path: String, stage: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(
        "artifact {path} was produced with a different config (hash {found}, expected {expected}); \
         rerun the producing stage or pass --force"
    )]
    ConfigHashMismatch {
        path: String,
        found: String,
        expected: String,
    },

    #[error("fetch error: {0}")]
    Fetch(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
