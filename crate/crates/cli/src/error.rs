use std::path::PathBuf;

use thiserror::Error;

/// CLI failures, grouped by process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Ingest { path: PathBuf, source: IngestError },

    #[error("{0}")]
    Data(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{path}: {msg}")]
    Io { path: PathBuf, msg: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Ingest { .. } | CliError::Data(_) | CliError::Io { .. } => 2,
            CliError::Numerical(_) => 3,
        }
    }

    pub fn io(path: impl Into<PathBuf>, err: impl std::fmt::Display) -> Self {
        CliError::Io { path: path.into(), msg: err.to_string() }
    }
}

/// Sorts core errors into the exit-code classes.
impl From<psman_core::Error> for CliError {
    fn from(e: psman_core::Error) -> Self {
        use psman_core::Error as E;
        match e {
            E::RankDeficient { .. } => CliError::Numerical(e.to_string()),
            E::InvalidSpec(_) | E::InvalidConfig(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

/// Problems reading a CSV file. Rows and columns are 1-based.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum IngestError {
    #[error("row {row}, column {col}: cannot parse `{value}` as a number")]
    ParseError { row: usize, col: usize, value: String },

    #[error("file contains no data rows")]
    EmptyFile,

    #[error("row {row} has {found} columns, expected {expected}")]
    MixedColumnCount { row: usize, expected: usize, found: usize },

    #[error("no column named `{0}` in the header")]
    MissingLabelColumn(String),

    #[error("a label column needs at least one feature column")]
    NoFeatures,

    #[error("row {row}: {msg}")]
    Malformed { row: usize, msg: String },

    #[error("{0}")]
    Io(String),
}

pub type CliResult<T> = Result<T, CliError>;
