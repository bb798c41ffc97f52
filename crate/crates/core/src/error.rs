use thiserror::Error;

/// Failure modes shared by every module of the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not symplectic: |M^T J M - J|_inf = {defect:.3e} exceeds {tol:.3e}")]
    NotSymplectic { defect: f64, tol: f64 },

    #[error("matrix is not orthogonal: |M^T M - I|_inf = {defect:.3e}")]
    NotOrthogonal { defect: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is singular")]
    SingularMatrix,

    #[error("no zero found: {0}")]
    NoZeroFound(String),

    #[error("origin is not an interior point of the body")]
    OriginNotInterior,

    #[error("no fixed point of the symplectic map lies in the interior of the body")]
    NoFixedInteriorPoint,

    #[error("optimizer did not converge after {iterations} iterations (gradient norm {grad_norm:.3e})")]
    NonConvergence { iterations: usize, grad_norm: f64 },

    #[error("carrier residual {residual:.3e} exceeds tolerance {tol:.3e}")]
    CarrierResidualTooLarge { residual: f64, tol: f64 },

    #[error("zero denominator in period integral")]
    ZeroDenominator,

    #[error("assumption violated: {0}")]
    AssumptionViolated(String),

    #[error("sample {index} lies on neither factor boundary")]
    ClassificationAmbiguous { index: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
