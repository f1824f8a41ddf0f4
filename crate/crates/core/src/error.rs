use thiserror::Error;

/// Errors raised by the walk engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),

    #[error("state is not normalized (norm deviation {deviation:.3e})")]
    Unnormalized { deviation: f64 },

    #[error("axis {axis} out of range for a {dimension}D lattice")]
    AxisOutOfRange { axis: usize, dimension: usize },

    #[error("protocol requires a {expected}D lattice, got {actual}D")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid optics: {0}")]
    Optics(String),

    #[error("degenerate shape: {0}")]
    DegenerateShape(String),

    #[error("ill-defined winding: {0}")]
    IllDefinedWinding(String),

    #[error("ambiguous edge-mode crossing: {0}")]
    AmbiguousCrossing(String),

    #[error("basis of size {size} exceeds the dense density-operator cap of {cap}; use trajectory unraveling")]
    DenseTooLarge { size: usize, cap: usize },

    #[error("invalid decoherence configuration: {0}")]
    Decoherence(String),

    #[error("numerical invariant violated: {0}")]
    Invariant(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
