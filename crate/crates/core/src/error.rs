use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported spatial dimension {0} (expected 1 or 2)")]
    UnsupportedDimension(usize),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("non-finite value in {what} at index {index}")]
    NonFinite { what: &'static str, index: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("material functions violate assumptions: {0}")]
    Assumption(String),

    #[error("no truncation level M <= {limit:e} satisfies the selection rule; g is not coercive")]
    TruncationNotFound { limit: f64 },

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("theta step did not converge in {iterations} iterations (gap {gap:e}, target {target:e})")]
    ThetaNotConverged { iterations: usize, gap: f64, target: f64 },

    #[error("eta step stagnated after {iterations} Newton iterations (residual {residual:e}); tau may exceed the solvability threshold")]
    NewtonStagnation { iterations: usize, residual: f64 },

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("step {index} failed: {source}")]
    StepFailed {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("time {t} outside [0, {t_final}]")]
    TimeOutOfRange { t: f64, t_final: f64 },
}
