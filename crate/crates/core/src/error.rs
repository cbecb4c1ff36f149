use std::io;

use thiserror::Error;

/// Errors surfaced by every fallible operation in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is rank deficient: column {column} has residual {residual:.3e} (norm {norm:.3e})")]
    RankDeficient {
        column: usize,
        residual: f64,
        norm: f64,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Divergence { epoch: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("surrogate looks untrained: accuracy {accuracy:.4} on its own training set (needs > {floor:.4})")]
    UntrainedSurrogate { accuracy: f64, floor: f64 },

    #[error("input contract violated: {0}")]
    Contract(String),

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code associated with this error class.
    ///
    /// 2 config error, 3 input-contract error, 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::InvalidParameter(_) => 2,
            Error::Divergence { .. }
            | Error::Numerical(_)
            | Error::RankDeficient { .. }
            | Error::UntrainedSurrogate { .. } => 4,
            Error::Dimension(_)
            | Error::Format(_)
            | Error::Contract(_)
            | Error::Io(_)
            | Error::Json(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
