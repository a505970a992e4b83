use thiserror::Error;

/// Errors produced by model construction, integration, root finding and the sweep.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum TwigError {
    #[error("unknown model `{name}` (available: {available})")]
    UnknownModel { name: String, available: String },

    #[error("model `{model}` does not support order {order} (max {max})")]
    UnsupportedOrder {
        model: String,
        order: usize,
        max: usize,
    },

    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),

    #[error("invalid model definition: {0}")]
    InvalidModel(String),

    #[error("dimension mismatch: expected {expected}, got {got} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("right-hand side diverged (non-finite value) at t = {t}")]
    Divergence { t: f64 },

    #[error("trajectory exceeded |y| > 1e8 at t = {t}")]
    HorizonExceeded { t: f64 },

    #[error("step size underflow at t = {t} (h = {h:e})")]
    Stiffness { t: f64, h: f64 },

    #[error("non-finite Jacobian entry ({what})")]
    NonFiniteJacobian { what: &'static str },

    #[error("invalid sample grid: {0}")]
    InvalidGrid(String),

    #[error(
        "Newton iteration did not converge after {iterations} iterations (residual {residual:e})"
    )]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("singular state Jacobian at Newton iterate {iteration}")]
    SingularJacobian { iteration: usize },

    #[error("input is not oscillatory; no interior fixed point to locate")]
    NotOscillatory,

    #[error("SVD failed at t_max = {t_max}")]
    SvdFailure { t_max: f64 },

    #[error("invalid sweep configuration: {0}")]
    InvalidSweep(String),

    #[error("classification needs at least {needed} horizons in the tail window, have {have}")]
    InsufficientTail { needed: usize, have: usize },

    #[error("sweep produced no completed horizons")]
    EmptySweep,

    #[error("oracle singularity: t = {t} is not below the singular time {singular_time}")]
    OracleSingularity { t: f64, singular_time: f64 },

    #[error("no closed-form oracle for {0}")]
    UnsupportedOracle(String),

    #[error("no sign change of the Hopf condition in the bracket [{lo}, {hi}]")]
    NoHopfCrossing { lo: f64, hi: f64 },
}

pub type Result<T> = std::result::Result<T, TwigError>;
