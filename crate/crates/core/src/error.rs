use thiserror::Error;

/// Errors raised by sequence handling, model evaluation and training.
#[derive(Debug, Error)]
pub enum GlnnError {
    #[error("empty sequence")]
    EmptySequence,

    #[error("no predicted positions")]
    NoPredictedPositions,

    #[error("symbol {0:?} is not in the alphabet")]
    UnknownSymbol(char),

    #[error("token {token} out of range for alphabet of size {alphabet_size}")]
    TokenOutOfRange { token: usize, alphabet_size: usize },

    #[error("duplicate symbol {0:?} in alphabet")]
    DuplicateSymbol(char),

    #[error("mask length {mask} does not match sequence length {tokens}")]
    MaskLength { tokens: usize, mask: usize },

    #[error("connectivity {d} is outside 1..={n}")]
    InvalidConnectivity { d: usize, n: usize },

    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    #[error("divergent dynamics at t = {t}")]
    DivergentDynamics { t: usize },

    #[error("metric degenerate")]
    MetricDegenerate,

    #[error("metric not positive definite")]
    NotPositiveDefinite,

    #[error("instance too large for the unfolding oracle ({units} units, {steps} steps)")]
    InstanceTooLarge { units: usize, steps: usize },

    #[error("parameter shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = GlnnError> = std::result::Result<T, E>;
