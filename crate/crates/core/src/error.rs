use thiserror::Error;

/// Errors raised by the library.
///
/// Arm indices carried in error values are 1-based, matching every other
/// externally visible arm index.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("no feasible arm under the given means")]
    NoFeasibleArm,

    #[error("best feasible arm is not unique (arms {0} and {1} tie)")]
    TiedBest(usize, usize),

    #[error("arm {0} has no samples yet; its posterior is undefined")]
    UninformedArm(usize),

    #[error("arm {0} is the best feasible arm and has no competitor rate term")]
    BadArm(usize),

    #[error("allocation problem is degenerate: {0}")]
    Degenerate(String),

    #[error("budget {budget} is smaller than the warm-up requirement {required}")]
    BudgetTooSmall { budget: usize, required: usize },

    #[error("unknown experiment id `{0}`")]
    UnknownId(String),

    #[error("unknown algorithm `{0}`")]
    UnknownAlgorithm(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
