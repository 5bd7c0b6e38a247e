use thiserror::Error;

/// Errors raised anywhere in the solver pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("vertex {0} lies on the Dirichlet boundary and carries no hat function")]
    BoundaryNode(usize),
    #[error("no quadrature rule of degree {degree} in dimension {dim}")]
    UnsupportedQuadrature { dim: usize, degree: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("ill-posed corrector problem on patch of element {0}")]
    IllPosedPatch(usize),
    #[error("factorization failed: {0}")]
    Factorization(String),
    #[error("triple ({0}, {1}, {2}) is not present in the tensor skeleton")]
    MissingTriple(usize, usize, usize),
    #[error("iteration did not converge after {iterations} steps (last change {last_change:e})")]
    NotConverged { iterations: usize, last_change: f64 },
    #[error("fixed-point iteration diverged at step {step} (increment {increment:e})")]
    FixedPointDiverged { step: usize, increment: f64 },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("cache error: {0}")]
    Cache(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
