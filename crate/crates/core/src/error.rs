use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum GameError {
    #[error("input distribution is empty")]
    EmptyInput,
    #[error("negative probability {value} at index {index}")]
    NegativeProbability { index: usize, value: f64 },
    #[error("distribution has no positive mass")]
    AllZero,
    #[error("non-finite value {value} at index {index}")]
    NonFiniteLogit { index: usize, value: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("not a probability distribution: {0}")]
    NotADistribution(String),
    #[error("argument {x} outside the domain of the objective")]
    DomainError { x: f64 },
    #[error("invalid objective: {0}")]
    BadObjective(String),
    #[error("assumption violated: {0}")]
    AssumptionViolated(String),
    #[error("bad sampler configuration: {0}")]
    BadConfig(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("instance too large: {0}")]
    TooLarge(String),
    #[error("chosen token {token} has zero probability at step {step}")]
    ZeroProbabilityChosen { step: usize, token: usize },
    #[error("record {id}: {source}")]
    Record {
        id: String,
        #[source]
        source: Box<GameError>,
    },
    #[error("parse error: {0}")]
    Parse(String),
}

impl GameError {
    /// Attaches a record identifier to an error.
    pub fn in_record(self, id: impl Into<String>) -> Self {
        GameError::Record {
            id: id.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, with record wrappers removed.
    pub fn root(&self) -> &GameError {
        match self {
            GameError::Record { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, GameError>;
