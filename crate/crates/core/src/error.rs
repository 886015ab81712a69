use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: malformed row: {reason}")]
    MalformedRow { line: usize, reason: String },

    #[error("line {line}: height and block hash must both be present or both be null")]
    InconsistentNull { line: usize },

    #[error("line {line}: time order violated: {reason}")]
    TimeOrderViolation { line: usize, reason: String },

    #[error("canonical chain has a gap: height {missing} is missing")]
    GapInChain { missing: u64 },

    #[error("canonical chain lists height {height} more than once")]
    DuplicateHeight { height: u64 },

    #[error("canonical chain is empty")]
    EmptyChain,

    #[error("campaign spec mismatch: {0}")]
    SpecMismatch(String),

    #[error("matrix has no known cells")]
    EmptyMatrix,

    #[error("regression needs at least {needed} known cells, found {found}")]
    InsufficientData { needed: usize, found: usize },

    #[error("value outside its domain: {0}")]
    DomainError(String),

    #[error("length mismatch: {left} predictions vs {right} truths")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty input")]
    EmptyInput,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors that originate in the filesystem rather than in the data.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
