use thiserror::Error;

/// Errors shared across the simulator core.
#[derive(Debug, Error)]
pub enum Error {
    /// A student neuron reached exactly zero norm. The 2-homogeneous
    /// parameterization makes the origin absorbing, so this is a hard error
    /// rather than something to clamp over.
    #[error("degenerate neuron {index}: row has zero norm")]
    DegenerateNeuron { index: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid activation: {0}")]
    InvalidActivation(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Divergence guard tripped during a training run.
    #[error(
        "run diverged at step {step}: neuron norm^2 {norm_sq:.6e} exceeds guard {guard:.6e} \
         (10 * max a_p)"
    )]
    Diverged { step: u64, norm_sq: f64, guard: f64 },

    /// The idealized overlap ODE is only defined before its blow-up time.
    #[error("post-transition: t = {t} is at or beyond the blow-up time {blow_up}")]
    PostTransition { t: f64, blow_up: f64 },

    #[error("not enough points: need at least {need}, got {got}")]
    TooFewPoints { need: usize, got: usize },

    #[error("corrupt snapshot: {0}")]
    Snapshot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
