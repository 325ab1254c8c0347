use thiserror::Error;

/// Every failure the engines can report.
///
/// The variant name doubles as the "error class" printed by the command-line
/// front-end, so variants are coarse on purpose and carry the offending value.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not Hermitian (max |h - h^dagger| = {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("eigen-solver did not converge after {sweeps} sweeps")]
    NoConvergence { sweeps: usize },

    #[error("matrix is singular (determinant {determinant:e})")]
    SingularMatrix { determinant: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("chart singularity: |1 + u v| = {modulus:e} on subsystem {subsystem}")]
    ChartSingularity { subsystem: char, modulus: f64 },

    #[error("coherent-state polynomial overflowed double range (|s| = {modulus}, two_j = {two_j})")]
    ScaleOverflow { modulus: f64, two_j: u32 },

    #[error("logarithm argument crossed the branch cut at t = {t}")]
    LogBranch { t: f64 },

    #[error("caustic encountered at t = {t}: |det| = {modulus:e}")]
    CausticEncountered { t: f64, modulus: f64 },

    #[error("semiclassical purity left its validity window: {reason}")]
    ValidityBreakdown { reason: String },

    #[error("canonical purity radicand has no admissible square root: {value}")]
    NegativeRadicand { value: String },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },

    #[error("invalid value for `{key}`: {message}")]
    Validation { key: String, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Short class name, e.g. `ValidityBreakdown`.
    pub fn class(&self) -> &'static str {
        match self {
            Error::NotHermitian { .. } => "NotHermitian",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::SingularMatrix { .. } => "SingularMatrix",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::StepSizeUnderflow { .. } => "StepSizeUnderflow",
            Error::ChartSingularity { .. } => "ChartSingularity",
            Error::ScaleOverflow { .. } => "ScaleOverflow",
            Error::LogBranch { .. } => "LogBranch",
            Error::CausticEncountered { .. } => "CausticEncountered",
            Error::ValidityBreakdown { .. } => "ValidityBreakdown",
            Error::NegativeRadicand { .. } => "NegativeRadicand",
            Error::Parse { .. } => "ParseError",
            Error::Validation { .. } => "ValidationError",
            Error::Io(_) => "IoError",
        }
    }

    pub(crate) fn validation(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation { key: key.into(), message: message.into() }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
