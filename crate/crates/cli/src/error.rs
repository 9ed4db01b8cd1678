use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: row {row}{}: {message}", column.map(|c| format!(", column {c}")).unwrap_or_default())]
    Csv { path: PathBuf, row: usize, column: Option<usize>, message: String },
    #[error("{path}: line {line}{}: {message}", field.as_ref().map(|f| format!(" ({f})")).unwrap_or_default())]
    Config { path: PathBuf, line: usize, field: Option<String>, message: String },
    #[error("{0}")]
    Data(String),
    #[error(transparent)]
    Model(#[from] hdiv::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{failed} of {total} replications failed (limit 5%)")]
    Campaign { failed: usize, total: usize },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config { .. } => 1,
            CliError::Csv { .. } | CliError::Data(_) | CliError::Model(_) | CliError::Io { .. } => 2,
            CliError::Campaign { .. } => 3,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
