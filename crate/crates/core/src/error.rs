use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },

    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss((usize, usize)),

    #[error("non-finite loss at perturbed parameter {param}[{index}]")]
    NonFiniteCheck { param: String, index: usize },

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("invalid instance {id}: {msg}")]
    Invalid { id: String, msg: String },

    #[error("invalid dependency tree: {0}")]
    Tree(String),

    #[error("unknown {kind} '{value}'")]
    Unknown { kind: &'static str, value: String },

    #[error("{0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(id: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Invalid {
            id: id.into(),
            msg: msg.into(),
        }
    }
}
