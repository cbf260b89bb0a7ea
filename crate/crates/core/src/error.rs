use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("level {level} exceeds the exact enumeration cap {cap}")]
    LevelCapExceeded { level: usize, cap: usize },

    #[error("level must be at least {min}, got {level}")]
    LevelTooSmall { level: usize, min: usize },

    #[error("parameter p = {0} is outside [0, 1]")]
    ParameterOutOfRange(String),

    #[error("separation distance requires p strictly inside (0, 1), got {0}")]
    DegenerateParameter(String),

    #[error("invalid rate sequence: {0}")]
    InvalidRates(String),

    #[error("unknown state encoding {0:?} at level {1}")]
    UnknownState(String, usize),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("index {index} out of range 1..={len}")]
    OutOfRange { index: usize, len: usize },

    #[error("size mismatch: {0}")]
    SizeMismatch(String),

    #[error("invalid adjacency: {0}")]
    InvalidAdjacency(String),

    #[error("reference distribution has no positive entry")]
    EmptySupport,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("floating-point cancellation: error bound {bound:e} exceeds budget for value {value:e}")]
    PrecisionLoss { value: f64, bound: f64 },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
