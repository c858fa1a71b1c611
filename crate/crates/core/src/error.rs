use thiserror::Error;

/// Errors raised anywhere in the estimation pipeline.
///
/// The variants line up with the CLI exit codes: schema/integrity/data
/// problems are data errors, numerical failures are numeric errors.
#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("harmonization error: {0}")]
    Harmonization(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("join error: {0}")]
    Join(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("model did not converge: {0}")]
    NotConverged(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures that stem from floating-point computation rather
    /// than from the shape or content of the input data.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Numeric(_) | Error::NotConverged(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
