use std::path::Path;

use thiserror::Error;

/// Errors of the driver layer. [`AppError::exit_code`] maps them onto the
/// CLI exit codes: 2 for configuration and input problems, 3 for numerical
/// failures.
#[derive(Debug, Error)]
pub enum AppError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("malformed input: {0}")]
    Format(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Core(#[from] robsur_core::Error),
}

pub type AppResult<T> = Result<T, AppError>;

impl AppError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        AppError::Io { path: path.display().to_string(), source }
    }

    pub fn exit_code(&self) -> i32 {
        use robsur_core::Error as E;
        match self {
            AppError::Config(_) | AppError::Format(_) | AppError::Io { .. } => 2,
            AppError::Core(E::InvalidConfig(_) | E::InvalidInstance(_) | E::DimensionMismatch { .. } | E::IndexOutOfRange { .. }) => 2,
            AppError::Core(E::UnsupportedUncertainty { .. }) => 2,
            AppError::Core(_) => 3,
        }
    }
}

impl From<csv::Error> for AppError {
    fn from(e: csv::Error) -> Self {
        AppError::Format(e.to_string())
    }
}
