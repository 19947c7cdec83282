use thiserror::Error;

/// Errors raised by the chain model, the stationary-point searches and the
/// coarse-graining analysis.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("bond {bond} has non-positive length {length}")]
    NonPositiveBond { bond: usize, length: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("invalid core size {core_size}: must be even and within [2, {max}]")]
    InvalidCoreSize { core_size: usize, max: usize },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("converged to a stationary point with {negative} negative Hessian eigenvalue(s), expected {expected}")]
    WrongIndex { negative: usize, expected: usize },

    #[error("no sign change of the central-bond force along the drag path")]
    NoSignChange,

    #[error("no root of the force balance in (0, L/2)")]
    NoRoot,

    #[error("none of the {0} force-balance roots is a first-order saddle")]
    NoSaddleRoot(usize),

    #[error("repatom region inappropriate: constrained block is not positive definite")]
    ConstrainedNotPositiveDefinite,

    #[error("no transition pathway: matrix has no negative eigenvalue")]
    NoNegativeEigenvalue,

    #[error("not a first-order saddle: {0} negative eigenvalues")]
    NotFirstOrderSaddle(usize),

    #[error("eigenvalue must be strictly negative, got {0}")]
    NonNegativeEigenvalue(f64),

    #[error("degenerate overlap between coarse and atomistic unstable modes ({0:e})")]
    DegenerateOverlap(f64),

    #[error("eigenvalue {0} does not give real characteristic roots")]
    ComplexRoots(f64),

    #[error("saddle cross-validation failed: drag and analytic saddles differ by {0:e}")]
    SaddleMismatch(f64),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
