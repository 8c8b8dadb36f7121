use thiserror::Error;

/// Failure modes across the library.
///
/// `Config` maps to CLI exit code 1, everything else to 2.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("numerical rank failure: {0}")]
    NumericalRank(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("encoding error: {0}")]
    Encoding(String),

    #[error("index {0} lies outside every user's admissible range")]
    InvalidUser(usize),

    #[error("internal model inconsistency: {0}")]
    ModelInconsistency(String),

    #[error("insufficient measurements: {0}")]
    InsufficientMeasurements(String),

    #[error("accounting error: {0}")]
    Accounting(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by an invalid scenario/experiment description.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Parse(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
