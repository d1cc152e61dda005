use thiserror::Error;

pub type Result<T, E = PnpError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum PnpError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("axis {axis} out of range for a {dim}-dimensional grid")]
    AxisOutOfRange { axis: usize, dim: usize },
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite value at node {0}")]
    NonFinite(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid initial data: {0}")]
    InvalidInitialData(String),
    #[error("projection did not converge after {iterations} iterations (residual {residual:e})")]
    ProjectionNotConverged { iterations: usize, residual: f64 },
    #[error("inner linear solve did not converge after {iterations} iterations (relative residual {residual:e})")]
    InnerSolveNotConverged { iterations: usize, residual: f64 },
    #[error("step {step} failed: {source}")]
    StepFailed {
        step: usize,
        #[source]
        source: Box<PnpError>,
    },
    #[error("malformed snapshot: {0}")]
    Snapshot(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
