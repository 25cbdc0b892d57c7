use thiserror::Error;

pub type Result<T> = std::result::Result<T, TkoError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TkoError {
    #[error("invalid delays p={p}, q={q}: require 0 <= p < q")]
    InvalidDelays { p: i64, q: i64 },

    #[error("signal too short: need at least {needed} samples, got {got}")]
    SignalTooShort { needed: usize, got: usize },

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("tap times must be strictly increasing")]
    NonIncreasingTaps,

    #[error("quadrature did not converge (error estimate {estimate:e})")]
    QuadratureNonConvergence { estimate: f64 },

    #[error("singular matrix encountered while evaluating the characteristic function")]
    SingularPencil,

    #[error("denominator is not essentially positive: P(V2 <= 0) = {prob:.4}; use a threshold")]
    DenominatorNotPositive { prob: f64 },

    #[error("acceptance probability too small: {rate:.3e}")]
    AcceptanceTooSmall { rate: f64 },

    #[error("not an extremum: derivative residual {residual:e}")]
    NotAnExtremum { residual: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}
