use thiserror::Error;

use crate::cvopt::CvResult;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("frequency vector is empty")]
    EmptyFrequencies,

    #[error("frequencies must be strictly decreasing, got {0:?}")]
    NotDecreasing(Vec<usize>),

    #[error("frequency {freq} does not divide the cycle length {cycle}")]
    NonDivisor { freq: usize, cycle: usize },

    #[error("last frequency must be 1, got {0}")]
    MissingBottom(usize),

    #[error("level {level} out of range for a hierarchy with {levels} levels")]
    LevelOutOfRange { level: usize, levels: usize },

    #[error("series length {len} is not a whole number of cycles of length {cycle}")]
    PartialCycle { len: usize, cycle: usize },

    #[error("no sample supplied for level {0}")]
    MissingLevel(usize),

    #[error("sample column counts differ: expected {expected}, got {actual}")]
    ColumnMismatch { expected: usize, actual: usize },

    #[error("level {level} sample has {actual} rows, expected {expected}")]
    RowCountMismatch {
        level: usize,
        expected: usize,
        actual: usize,
    },

    #[error("sample needs at least {required} columns, got {actual}")]
    TooFewSamples { required: usize, actual: usize },

    #[error("sample contains non-finite values")]
    NonFiniteSample,

    #[error("operation requires a {expected} sample, got {actual}")]
    SchemeMismatch {
        expected: &'static str,
        actual: &'static str,
    },

    #[error("{0} is not a fixed-weight method")]
    NotFixedMethod(&'static str),

    #[error("weighted least squares system is singular")]
    SingularSystem,

    #[error("expected {expected} weights, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("missing weight for level {level}, node {node}")]
    MissingWeight { level: usize, node: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("sample is empty")]
    EmptySample,

    #[error("samples and actuals are misaligned: {0}")]
    AlignmentError(String),

    #[error("cross-validation objective was non-finite at every start")]
    NonFinite,

    #[error("weight optimizer did not converge (best objective {:.6})", .best.objective)]
    DidNotConverge { best: Box<CvResult> },

    #[error("need at least {required} observations to fit, got {actual}")]
    TooShort { required: usize, actual: usize },

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("gap in series: missing periods {0}")]
    Gap(String),

    #[error("timestamps are not strictly increasing at row {row}: {timestamp}")]
    NonMonotoneTimestamps { row: usize, timestamp: String },

    #[error("reconciled sample incoherent: max violation {violation:e} exceeds {tol:e}")]
    Incoherent { violation: f64, tol: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Coarse failure category used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::EmptyFrequencies
            | Error::NotDecreasing(_)
            | Error::NonDivisor { .. }
            | Error::MissingBottom(_)
            | Error::InvalidScenario(_)
            | Error::Config(_) => ErrorKind::Config,
            Error::PartialCycle { .. }
            | Error::Schema(_)
            | Error::Gap(_)
            | Error::NonMonotoneTimestamps { .. }
            | Error::TooShort { .. }
            | Error::NonFiniteSample
            | Error::AlignmentError(_)
            | Error::Io(_)
            | Error::Csv(_) => ErrorKind::Data,
            _ => ErrorKind::Numerical,
        }
    }
}
