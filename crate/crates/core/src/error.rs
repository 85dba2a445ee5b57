use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("unsupported dimension {0}: only 2 and 3 are supported")]
    UnsupportedDimension(usize),

    #[error("grid needs at least 8 points per axis, got {0}")]
    TooFewPoints(usize),

    #[error("exponent p = {0} is invalid: p must be >= 1")]
    InvalidExponent(f64),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("expected {expected} components, got {actual}")]
    ComponentMismatch { expected: usize, actual: usize },

    #[error("test function support touches the boundary: margin {margin:.6} must be > 0")]
    SupportTouchesBoundary { margin: f64 },

    #[error(
        "test function support escapes the trusted interior: margin {actual:.6} < required {required:.6} ({depth} stencil layers)"
    )]
    SupportMargin {
        required: f64,
        actual: f64,
        depth: usize,
    },

    #[error("solver tolerance {0:e} must lie in (0, 1e-4]")]
    InvalidTolerance(f64),

    #[error("{backend} solver did not converge: {iterations} iterations, relative residual {residual:e}")]
    SolverNotConverged {
        backend: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("epsilon {0} is not of the form 1/(2*pi*k) for an integer k")]
    NonCommensurate(f64),

    #[error("invalid epsilon schedule: {0}")]
    InvalidSchedule(String),

    #[error("oscillation with k = {k} is under-resolved on n = {n}: need n >= {required_n}")]
    UnderResolved { k: u32, n: usize, required_n: usize },

    #[error("invalid sub-box: {0}")]
    InvalidSubBox(String),

    #[error("invalid profile: {0}")]
    InvalidProfile(String),

    #[error("invalid field data: {0}")]
    InvalidData(String),

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, LabError>;
