use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("design bit {component} is {bit} but its activation probability is degenerate at {prob}")]
    ImpossibleDesign { component: usize, bit: u8, prob: f64 },

    #[error("score variance diverges: component {component} has probability {prob} on the boundary")]
    DivergentVariance { component: usize, prob: f64 },

    #[error("index {index} out of range for {len} sensors")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("matrix `{0}` is not symmetric positive definite")]
    NotPositiveDefinite(&'static str),

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("criterion {0} is only defined for the two-sensor toy problem")]
    UnsupportedCriterion(&'static str),

    #[error("enumeration refused: {nsens} sensors exceeds the guard of {guard}")]
    GuardExceeded { nsens: usize, guard: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors raised by numerical routines rather than by bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite(_) | Error::LinearSolve(_) | Error::DivergentVariance { .. }
        )
    }
}
