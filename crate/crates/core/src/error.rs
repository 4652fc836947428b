use thiserror::Error;

/// Errors produced anywhere in the primitive pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// No basis function has measurable activation at this phase.
    #[error("degenerate basis: all activations vanish at phase k = {phase}")]
    DegenerateBasis { phase: f64 },

    #[error("integration diverged at step {step}")]
    Divergence { step: usize },

    /// The steering angle needs a moving system and a distinct obstacle.
    #[error("steering angle undefined (zero velocity or coincident obstacle)")]
    UndefinedSteering,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("non-physical fit: {0}")]
    NonPhysicalFit(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
