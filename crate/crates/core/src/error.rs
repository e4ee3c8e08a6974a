use thiserror::Error;

/// Errors raised by the geometry, model and harness layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("entry {index} is not strictly positive ({value})")]
    NonPositiveEntry { index: usize, value: f64 },

    #[error("entries sum to {sum}, expected {expected}")]
    BadSum { sum: f64, expected: f64 },

    #[error("invalid state space: {0}")]
    InvalidStateSpace(String),

    #[error("singular point: smallest singular value {singular_value:e} (relative threshold {threshold:e}){}",
        .node.map(|n| format!(" in block of node {n}")).unwrap_or_default())]
    SingularPoint {
        singular_value: f64,
        threshold: f64,
        node: Option<usize>,
    },

    #[error("pushforward of the model tangent space does not match the visible model tangent space: {0}")]
    RangeMismatch(String),

    #[error("visible point mismatch: marginal of joint model differs from visible model by {0:e}")]
    PointMismatch(f64),

    #[error("objective requires a recognition distribution q, none was given")]
    MissingRecognition,

    #[error("recognition distribution is not on the data manifold (marginal error {0:e})")]
    NotOnDataManifold(f64),

    #[error("finite-difference or integration step too large: {0}")]
    StepTooLarge(String),

    #[error("model has no joint visible/hidden structure")]
    NoJointSpace,

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
