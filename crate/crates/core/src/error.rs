use thiserror::Error;

/// Errors produced by the multiscale Stokes pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("circle {index} (radius {radius}) is not resolved by the fine mesh")]
    CircleTooSmall { index: usize, radius: f64 },

    #[error("node projection produced a degenerate triangle {triangle} (area {area:e})")]
    SnapDegeneracy { triangle: usize, area: f64 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("mesh invariant violated: {0}")]
    InvariantViolation(String),

    #[error("degenerate element (area {area:e})")]
    DegenerateElement { area: f64 },

    #[error("singular system: {detail} (relative residual {residual:e})")]
    SingularSystem { residual: f64, detail: String },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("all POD modes of block {block} fell below the tolerance")]
    EmptyAfterPod { block: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("solutions live on different meshes or partitions")]
    MeshMismatch,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
