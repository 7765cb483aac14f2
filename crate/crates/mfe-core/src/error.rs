//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A design or Jacobian matrix has (numerically) dependent columns.
    #[error("rank deficient: |r[{index},{index}]| = {diag:.3e} below tolerance {tol:.3e}")]
    RankDeficient { index: usize, diag: f64, tol: f64 },

    /// The shifted-QR eigenvalue iteration hit its sweep cap.
    #[error("eigenvalue iteration did not converge within {max_sweeps} sweeps")]
    NonConvergence { max_sweeps: usize },

    /// A black-box function returned NaN/Inf at a finite-difference probe.
    #[error("non-finite evaluation at probe {index}")]
    NonFiniteEvaluation { index: usize },

    /// Fewer samples than coefficients.
    #[error("insufficient data: {samples} samples for {coefficients} coefficients")]
    InsufficientData { samples: usize, coefficients: usize },

    #[error("division by zero: {context}")]
    DivisionByZero { context: String },

    /// The pitch-attitude relation degenerates near theta = +/-90 deg.
    #[error("theta singularity: |a^2 - sin^2 gamma*| = {denominator:.3e} < 1e-9")]
    ThetaSingularity { denominator: f64 },

    /// A sensitivity-analysis factor space contains a dependent pair.
    #[error("correlated factors '{a}' and '{b}': {guidance}")]
    CorrelatedFactors { a: String, b: String, guidance: String },

    /// A model is (numerically) constant over the factor space.
    #[error("degenerate variance: var(y) = {variance:.3e} over the sample plan")]
    DegenerateVariance { variance: f64 },

    #[error("shape mismatch: {context}")]
    ShapeMismatch { context: String },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invariant violation at row {row}: {message}")]
    InvariantViolation { row: usize, message: String },

    #[error("invalid value: {0}")]
    Invalid(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 configuration, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Parse { .. }
            | Error::InvariantViolation { .. }
            | Error::Data(_)
            | Error::InsufficientData { .. }
            | Error::Io(_)
            | Error::Json(_)
            | Error::Csv(_) => 3,
            _ => 4,
        }
    }
}
