use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A closed form was requested outside the regime where it is defined
    /// (e.g. a log factor goes nonpositive).
    #[error("invalid regime: {0}")]
    InvalidRegime(String),

    /// KL divergence is +inf because the first argument puts mass where the
    /// second has none.
    #[error("divergence is infinite: {0}")]
    InfiniteDivergence(String),

    /// Every hypothesis/particle assigned zero likelihood to the data.
    #[error("degenerate posterior: {0}")]
    DegeneratePosterior(String),

    /// An exact enumeration would exceed the configured table cap.
    #[error("capacity exceeded: need {required} cells, cap is {cap}")]
    Capacity { required: u128, cap: u128 },

    /// Iterative solver failed to reach its tolerance.
    #[error("no convergence: {context} (after {iterations} iterations, residual {residual:.3e})")]
    NoConvergence {
        context: String,
        iterations: usize,
        residual: f64,
    },

    /// Requested an inference mode an environment does not support.
    #[error("unsupported mode: {0}")]
    UnsupportedMode(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
