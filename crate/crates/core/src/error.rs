use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("point cloud is empty")]
    EmptyCloud,

    #[error("mesh has zero total surface area")]
    ZeroArea,

    #[error("unknown shape kind `{0}`")]
    UnknownShape(String),

    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("cloud has {got} points, at most {max} supported")]
    TooManyPoints { max: usize, got: usize },

    #[error("{vertices} vertices do not fit a {side}x{side} grid")]
    GridOverflow { vertices: usize, side: usize },

    #[error("inconsistent embedding: {0}")]
    InconsistentEmbedding(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("backward called without a forward cache")]
    MissingCache,

    #[error("leak map does not belong to this cloud")]
    StaleLeakMap,

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("training diverged at epoch {epoch} (loss is not finite)")]
    Diverged { epoch: usize },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}
