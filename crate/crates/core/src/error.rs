use thiserror::Error;

/// Errors raised across the simulator and the orchestration library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("capacity {capacity} PRBs is not a multiple of chunk {chunk}")]
    NonDivisibleCapacity { capacity: u32, chunk: u32 },

    #[error("at least one slice is required")]
    NoSlices,

    #[error("MCS table is empty")]
    EmptyMcsTable,

    #[error("malformed MCS table at line {line}: {reason}")]
    MalformedMcsTable { line: usize, reason: String },

    #[error("distribution is not normalized (sum = {sum})")]
    NotNormalized { sum: f64 },

    #[error("invalid DTMC parameters: {0}")]
    InvalidDtmcParams(String),

    #[error("reducible chain: stationary distribution is not unique")]
    ReducibleChain,

    #[error("singular linear system")]
    SingularSystem,

    #[error("observation history is empty")]
    EmptyHistory,

    #[error("malformed history at line {line}: {reason}")]
    MalformedHistory { line: usize, reason: String },

    #[error("bandit is uninitialized: arm {0} has never been pulled")]
    Uninitialized(usize),

    #[error("invalid arm index {0}")]
    InvalidArm(usize),

    #[error("reward gap must be strictly positive, got {0}")]
    NonPositiveGap(f64),

    #[error("KL divergence undefined: {0}")]
    UndefinedDivergence(String),

    #[error("unknown preset '{0}'")]
    UnknownPreset(String),

    #[error("I/O error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
