use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("missing {what}: {}", path.display())]
    MissingFile { what: &'static str, path: PathBuf },

    #[error("rotation block of frame {frame} is not orthonormal (deviation {deviation:.3e})")]
    RotationNotOrthonormal { frame: usize, deviation: f64 },

    #[error("projection collapses subspace {group}: rank {rank} < {dim}")]
    ProjectionCollapse { group: usize, rank: usize, dim: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("cannot parse {}: {msg}", path.display())]
    Parse { path: PathBuf, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical(_) | Error::ProjectionCollapse { .. })
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
