use thiserror::Error;

/// Errors raised by the samplers, estimators, and loaders in this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("matrix decomposition failed: {0}")]
    Decomposition(String),

    #[error("numerical failure in step {step}: {message}")]
    Numerical { step: usize, message: String },

    #[error("design matrix is rank deficient; dependent columns: {columns:?}")]
    RankDeficient { columns: Vec<String> },

    #[error("fit did not converge: {0}")]
    Fit(String),

    #[error("ingestion error at row {row}, column `{column}`: {message}")]
    Ingestion {
        row: usize,
        column: String,
        message: String,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn numerical(step: usize, message: impl Into<String>) -> Self {
        Error::Numerical {
            step,
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
