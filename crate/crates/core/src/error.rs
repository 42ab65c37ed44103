use thiserror::Error;

/// Errors raised anywhere in the estimation pipeline.
#[derive(Debug, Error)]
pub enum NirvarError {
    /// Invalid user-supplied parameters (bad simplex, out of range radius, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Inputs whose shapes do not agree.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A matrix that had to be inverted or factorised was singular.
    #[error("singular matrix: {0}")]
    Singular(String),

    /// Iterative procedure failed to converge or produced non-finite values.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A statistic is undefined for the given input (zero variance, empty set, ...).
    #[error("undefined metric: {0}")]
    Metric(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl NirvarError {
    /// Whether the error stems from user input rather than the numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            NirvarError::Config(_)
                | NirvarError::Dimension(_)
                | NirvarError::Parse(_)
                | NirvarError::Io(_)
                | NirvarError::Json(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, NirvarError>;

impl From<csv::Error> for NirvarError {
    fn from(e: csv::Error) -> Self {
        if e.is_io_error() {
            if let csv::ErrorKind::Io(io) = e.into_kind() {
                return NirvarError::Io(io);
            }
            unreachable!("csv I/O error without an I/O kind");
        }
        NirvarError::Parse(e.to_string())
    }
}
