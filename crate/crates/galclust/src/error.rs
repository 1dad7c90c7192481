use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("missing required column `{0}`")]
    MissingColumn(String),

    #[error("parse error in {path} line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("empty window: all window weights are zero")]
    EmptyWindow,

    #[error("theta binning mismatch between stripes")]
    BinningMismatch,

    #[error("correlation table does not cover separation {r:.3} (max {max:.3})")]
    XiRange { r: f64, max: f64 },

    #[error("eigendecomposition failed to converge: {0}")]
    Eigen(String),

    #[error("matrix numerically singular: {0}")]
    Singular(String),

    #[error("quadrature failed to converge: {0}")]
    Quadrature(String),

    #[error("empty result: {0}")]
    Empty(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code class used by the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::Config(_) | Error::MissingColumn(_) | Error::Parse { .. } => {
                2
            }
            Error::Domain(_) | Error::BinningMismatch | Error::Empty(_) | Error::XiRange { .. } => {
                3
            }
            Error::EmptyWindow
            | Error::Eigen(_)
            | Error::Singular(_)
            | Error::Quadrature(_) => 4,
        }
    }
}
