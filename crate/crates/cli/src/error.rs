use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),

    #[error("missing {} (run `pfs {stage}` first)", path.display())]
    Dependency { stage: &'static str, path: PathBuf },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error(transparent)]
    Core(#[from] pfs_core::Error),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    /// 0 success, 1 usage, 2 data, 3 numeric, 4 validation.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Dependency { .. } => 1,
            CliError::Validation(_) => 4,
            CliError::Core(pfs_core::Error::Config(_)) => 1,
            CliError::Core(e) if e.is_numeric() => 3,
            CliError::Core(_) => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
