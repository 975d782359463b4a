use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid extents must be at least 3 per axis (got {extent_p}x{extent_q})")]
    InvalidGrid { extent_p: usize, extent_q: usize },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("time slice {j} is missing from the field history")]
    MissingSlice { j: usize },

    #[error("tensor index {0} out of range (expected 0, 1 or 2)")]
    InvalidIndex(usize),

    #[error("probability mass {mass:.3e} within 2 sites of the wrap seam at step {j}")]
    BoundaryGuard { j: usize, mass: f64 },

    #[error("potential varies along q; the K-reduced step requires q-independent potentials")]
    PotentialNotQIndependent,

    #[error("continuum domain too small: {0}")]
    DomainTooSmall(String),

    #[error("walk step {eps} is not an integer multiple of the fine step {h}")]
    IncommensurateStep { eps: f64, h: f64 },

    #[error("eigen-solver did not converge: {0}")]
    NotConverged(String),

    #[error("series shows no oscillation ({extrema} extrema found)")]
    NoOscillation { extrema: usize },

    #[error("no density front above the prominence threshold")]
    NoFront,

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    InvalidConfig(Vec<String>),

    #[error("exact-identity check failed before the run: {0}")]
    InvariantViolation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
