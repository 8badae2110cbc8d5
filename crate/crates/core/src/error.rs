//! Error type shared by all modules.

use std::fmt;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug)]
pub enum Error {
    /// `X_m'X_m` fell below the reciprocal-condition-number floor.
    SingularDesign { model: usize, rcond: f64 },
    /// A leverage value reached 1 within tolerance, so the leave-one-out
    /// rescaling `(1 - h_ii)^{-1}` is unusable.
    LeverageOverflow { model: usize, row: usize, leverage: f64 },
    /// Residual variance undefined: the largest model has `k_M >= n`.
    DegenerateVariance { n: usize, k_max: usize },
    DimensionMismatch { what: &'static str, expected: usize, got: usize },
    /// The Gram matrix of fitted-value columns is singular at `lambda = 0`.
    SingularGram { rcond: f64 },
    /// Quadratic-program input is not symmetric positive semidefinite.
    NotPsd { detail: String },
    /// Iterative solver hit its iteration cap before reaching tolerance.
    NonConvergence { iters: usize, residual: f64 },
    /// The generalized-cross-validation denominator `1 - w'kappa/n` vanished.
    GcvDenominatorVanishes { value: f64 },
    /// A residual sum of squares was zero or negative, so log-scores are undefined.
    DegenerateRss { model: usize },
    /// Monte Carlo moment matrix for the risk-minimizing weights is singular.
    SingularMoment { rcond: f64 },
    /// Input violated a documented precondition (bad config, bad spec, ...).
    Invalid(String),
    /// Delimited-text ingestion failed at a specific cell.
    Parse { line: usize, column: String, detail: String },
    MissingResponse { name: String },
    /// Too many Monte Carlo replications failed to complete.
    TooManyFailures { failed: usize, total: usize },
    Io(std::io::Error),
}

impl Error {
    /// Attach the index of the candidate model that produced this error.
    pub(crate) fn with_model(mut self, m: usize) -> Self {
        match &mut self {
            Error::SingularDesign { model, .. }
            | Error::LeverageOverflow { model, .. }
            | Error::DegenerateRss { model } => *model = m,
            _ => {}
        }
        self
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::SingularDesign { model, rcond } => write!(
                f,
                "singular design in model {model}: reciprocal condition number {rcond:.3e} below floor"
            ),
            Error::LeverageOverflow { model, row, leverage } => write!(
                f,
                "leverage overflow in model {model}: h[{row}] = {leverage} is numerically 1"
            ),
            Error::DegenerateVariance { n, k_max } => write!(
                f,
                "cannot estimate residual variance: largest model has {k_max} covariates with only {n} observations"
            ),
            Error::DimensionMismatch { what, expected, got } => {
                write!(f, "dimension mismatch in {what}: expected {expected}, got {got}")
            }
            Error::SingularGram { rcond } => write!(
                f,
                "fitted-value Gram matrix singular at lambda = 0 (rcond {rcond:.3e})"
            ),
            Error::NotPsd { detail } => write!(f, "matrix not positive semidefinite: {detail}"),
            Error::NonConvergence { iters, residual } => write!(
                f,
                "solver did not converge after {iters} iterations (residual {residual:.3e})"
            ),
            Error::GcvDenominatorVanishes { value } => {
                write!(f, "GCV denominator 1 - w'kappa/n = {value:.3e} vanished")
            }
            Error::DegenerateRss { model } => {
                write!(f, "residual sum of squares for model {model} is not positive")
            }
            Error::SingularMoment { rcond } => write!(
                f,
                "Monte Carlo moment matrix singular (rcond {rcond:.3e})"
            ),
            Error::Invalid(msg) => write!(f, "invalid input: {msg}"),
            Error::Parse { line, column, detail } => {
                write!(f, "parse error at line {line}, column '{column}': {detail}")
            }
            Error::MissingResponse { name } => {
                write!(f, "response column '{name}' not found in header")
            }
            Error::TooManyFailures { failed, total } => {
                write!(f, "{failed} of {total} replications failed (limit is 1%)")
            }
            Error::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}
