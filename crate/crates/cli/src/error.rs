use rangeloc::estimators::FilterError;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CliError {
    #[error("{field}: {message}")]
    Config { field: String, message: String },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("{path}: {message}")]
    Csv { path: String, message: String },
    #[error("{0}")]
    Io(String),
    #[error("numerical failure: {0}")]
    Numerical(#[from] FilterError),
}

impl CliError {
    /// Process exit status: 2 for bad input, 4 for covariance breakdown, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Parse(_) | CliError::Csv { .. } => 2,
            CliError::Numerical(FilterError::NotPositiveDefinite { .. }) => 4,
            CliError::Numerical(_) => 2,
            CliError::Io(_) => 1,
        }
    }
}

pub(crate) fn io_error(path: &std::path::Path, err: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {err}", path.display()))
}
