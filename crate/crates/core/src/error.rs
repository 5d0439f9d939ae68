use thiserror::Error;

/// Errors raised by the geometry, quadrature and spectral layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("degenerate metric at parameter {param:?}: Gram determinant {det:e}")]
    DegenerateMetric { param: Vec<f64>, det: f64 },

    #[error("normal frame discontinuity: {0}")]
    FrameDiscontinuity(String),

    #[error("unsupported parameter domain: {0}")]
    UnsupportedDomain(String),

    #[error("non-finite value at node {index}")]
    NonFiniteValue { index: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("mean curvature vanishes at {} node(s), first at {:?}", nodes.len(), nodes.first())]
    VanishingMeanCurvature { nodes: Vec<usize> },

    #[error("optimizer did not converge after {iterations} iterations (best value {best})")]
    NonConvergence { iterations: usize, best: f64 },

    #[error("not a critical point: shrinker residual {residual:e} exceeds {tolerance:e}")]
    NotACriticalPoint { residual: f64, tolerance: f64 },

    #[error("deformed immersion degenerates at s = {s}")]
    ImmersionLost { s: f64 },

    #[error("eigensolver failure: {0}")]
    EigensolverFailure(String),

    #[error("inconclusive at this resolution: eigenvalue {eigenvalue} sits near a band edge")]
    InconclusiveResolution { eigenvalue: f64 },

    #[error("model is not minimal in the sphere of radius sqrt(n): {0}")]
    NotMinimalInSphere(String),

    #[error("cutoff radius {needed} exceeds grid truncation {truncation}")]
    TruncationTooSmall { needed: f64, truncation: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
