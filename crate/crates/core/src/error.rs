use thiserror::Error;

use crate::equalizer::SolveOutcome;

/// Errors raised by the geometry, measure and solver routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("vector has (numerically) zero norm")]
    ZeroVector,

    #[error("dimension mismatch: expected S^{expected}, got S^{found}")]
    DimMismatch { expected: usize, found: usize },

    #[error("direction is not tangent at the base point (dot product {0:e})")]
    NotTangent(f64),

    #[error("weighted mean is degenerate (norm {0:e})")]
    DegenerateMean(f64),

    #[error("point lies on the cutting hypersphere of node {node}")]
    OnBoundary { node: usize },

    #[error("tree depth {0} exceeds the orbit enumeration cap of 4")]
    DepthTooLarge(usize),

    #[error("cell {leaf} is empty, its center is undefined")]
    DegenerateCell { leaf: usize },

    #[error("argument {0} lies outside the density domain")]
    OutOfDomain(f64),

    #[error("density does not attain its maximum at 0")]
    MaxNotAtZero,

    #[error("integral of the density vanishes")]
    ZeroMass,

    #[error("density maximum is a plateau spanning {0:.3e} radians")]
    PlateauDetected(f64),

    #[error("solver did not reach the target residual (best {:.3e})", .0.residual)]
    NotConverged(Box<SolveOutcome>),

    #[error("plane budget of {0} exceeded while building the net")]
    BudgetExceeded(usize),

    #[error("cell has no sample points")]
    EmptyCell,

    #[error("no slab points near z = {0:?}; the fiber is empty or too thin")]
    EmptySlab(Vec<f64>),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
