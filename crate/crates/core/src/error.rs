use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix contains a non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("SVD did not converge after {sweeps} sweeps")]
    SvdNoConvergence { sweeps: usize },
    #[error("matrix is numerically singular ({0})")]
    Singular(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("training diverged: {0}")]
    NonFiniteLoss(String),
    #[error("iteration diverged: {0}")]
    Divergence(String),
    #[error("duplicate GJ input name `{0}`")]
    DuplicateInput(String),
    #[error("division by zero in traced computation (node {0})")]
    TracedDivisionByZero(usize),
    #[error("matrix file: {0}")]
    Format(String),
    #[error("matrix file does not start with the SKLB1 magic")]
    BadMagic,
    #[error("matrix file truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },
    #[error("matrix file declares {rows}×{cols}, which overflows the addressable size")]
    DimensionOverflow { rows: u64, cols: u64 },
    #[error("io: {0}")]
    Io(String),
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
