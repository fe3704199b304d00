use thiserror::Error;

/// Errors produced by the numerical core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is rank deficient: |R[{col},{col}]| = {value:e} below tolerance {tol:e}")]
    RankDeficient { col: usize, value: f64, tol: f64 },

    #[error("expected a square matrix, got {rows}x{cols}")]
    NonSquare { rows: usize, cols: usize },

    #[error("{context}: expected {expected_rows}x{expected_cols}, got {rows}x{cols}")]
    ShapeMismatch { context: &'static str, expected_rows: usize, expected_cols: usize, rows: usize, cols: usize },

    #[error("matrix is not orthonormal (defect {defect:e})")]
    NotOrthonormal { defect: f64 },

    #[error("matrix contains a non-finite entry at ({row},{col})")]
    NonFinite { row: usize, col: usize },

    #[error("empty matrix ({rows}x{cols})")]
    Empty { rows: usize, cols: usize },

    #[error("invalid partition spec: {0}")]
    InvalidSpec(String),

    #[error("partition specs differ")]
    SpecMismatch,

    #[error("expected {expected} datasets, got {found}")]
    DatasetCountMismatch { expected: usize, found: usize },

    #[error("class {0} has no samples")]
    EmptyClass(String),

    #[error("dataset `{0}` has zero energy")]
    ZeroDataset(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed checkpoint, line {line}: {msg}")]
    Checkpoint { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] IoError),
}

/// `std::io::Error` is neither `Clone` nor `PartialEq`; keep its rendered form.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{0}")]
pub struct IoError(pub String);

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(IoError(e.to_string()))
    }
}

impl Error {
    /// True for failures caused by the numerics rather than by bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::RankDeficient { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
