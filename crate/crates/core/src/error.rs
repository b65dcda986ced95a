use thiserror::Error;

/// Errors produced by geometry construction, field algebra, and solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("singular metric at node ({i}, {j}, {k}): det = {det}")]
    SingularMetric { i: usize, j: usize, k: usize, det: f64 },

    #[error("degenerate gradient |d\u{3c9}| = {norm} at node ({i}, {j}, {k})")]
    DegenerateGradient { i: usize, j: usize, k: usize, norm: f64 },

    #[error("fields live on incompatible grids: {0}")]
    GridMismatch(String),

    #[error("rank mismatch: {0}")]
    RankMismatch(String),

    #[error("insufficient resolution: {0}")]
    Resolution(String),

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("nonlinear solve failed: {0}")]
    NonlinearSolve(String),

    #[error("solver produced nonpositive conformal factor (min = {min})")]
    NonpositiveFactor { min: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("checkpoint format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
