use thiserror::Error;

/// Errors raised while building or solving a decomposed ELM system.
#[derive(Debug, Error)]
pub enum DdelmError {
    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("unknown problem `{0}`")]
    UnknownProblem(String),

    #[error("derivative order {order} exceeds the supported maximum of 4")]
    DerivativeOrder { order: usize },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("transition mismatch: {0}")]
    Transition(String),

    #[error("coarse system factorization failed ({0}); try a smaller rank tolerance or a different coarse space")]
    CoarseFactorization(String),

    #[error("conjugate gradient detected negative curvature {curvature:e} at iteration {iteration}")]
    NegativeCurvature { iteration: usize, curvature: f64 },

    #[error("conjugate gradient did not converge in {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("dense oracle size guard exceeded: {unknowns} unknowns > {limit}")]
    SizeGuard { unknowns: usize, limit: usize },

    #[error("reference solve failed: {0}")]
    Reference(String),
}

pub type Result<T> = std::result::Result<T, DdelmError>;
