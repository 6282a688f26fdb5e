use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("singular kernel: {0}")]
    Singularity(String),

    #[error("coincident points {i} and {j}")]
    CoincidentPoints { i: usize, j: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("no equilibrium measure: {0}")]
    NoEquilibrium(String),

    #[error("{what} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        what: String,
        iterations: usize,
        residual: f64,
    },

    #[error("mean-field iteration diverged (residual {residual:.3e}); retry with damping below {damping}")]
    Divergence { residual: f64, damping: f64 },

    #[error("separation check failed for {} pair(s), first {:?}", .pairs.len(), .pairs.first())]
    Separation { pairs: Vec<(usize, usize)> },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("tiling infeasible: {0}")]
    TilingInfeasible(String),

    #[error("Langevin proposal produced a non-finite point at dt = {dt}; use a smaller step")]
    StepBlowUp { dt: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
