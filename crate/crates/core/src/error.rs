use thiserror::Error;

/// Errors raised by the library. Variants are grouped by the module that
/// produces them.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix must be square with n >= 2, got {rows} rows of length {cols}")]
    BadShape { rows: usize, cols: usize },
    #[error("non-finite entry at ({row}, {col})")]
    NonFiniteEntry { row: usize, col: usize },
    #[error("(A1) quasi-positivity violated: L[{row}][{col}] = {value}")]
    NegativeOffDiagonal { row: usize, col: usize, value: f64 },
    #[error("(A1) column {col} sums to {sum}, expected 0")]
    ColumnSumNonzero { col: usize, sum: f64 },
    #[error("(A1) connectivity graph is not strongly connected (patch {unreachable} is cut off)")]
    Reducible { unreachable: usize },
    #[error("iteration did not converge after {iterations} steps (residual {residual:e})")]
    ConvergenceFailure { iterations: usize, residual: f64 },
    #[error("matrix is not quasi-positive: entry ({row}, {col}) = {value}")]
    NotQuasiPositive { row: usize, col: usize, value: f64 },
    #[error("matrix is not line-sum symmetric (row {row}: row sum {row_sum}, column sum {col_sum})")]
    NotLineSumSymmetric { row: usize, row_sum: f64, col_sum: f64 },
    #[error("length mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("non-finite state component")]
    NonFiniteState,

    #[error("invalid integration settings: {0}")]
    InvalidSettings(String),
    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepSizeUnderflow { t: f64, h: f64 },
    #[error("component {index} vanished at t = {t}")]
    ZeroComponent { t: f64, index: usize },

    #[error("Lyapunov function {kind} does not apply to this scenario: {reason}")]
    KindMismatch { kind: &'static str, reason: String },
    #[error("regime mismatch: {0}")]
    RegimeMismatch(String),
    #[error("spectral constraint could not be evaluated: {0}")]
    InfeasibleNumerics(String),
    #[error("prediction and observation do not belong to the same scenario: {0}")]
    ScenarioMismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;
