use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid bounds: {0}")]
    InvalidBounds(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("task matrix has no rows")]
    EmptyMatrix,

    #[error("penalty dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("row {row} violates bounds: {reason}")]
    RowOutOfBounds { row: usize, reason: String },

    #[error("every row was rejected by the constraint filter")]
    NoFeasibleRow,

    #[error("unsupported pairing: {0}")]
    Unsupported(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("optimization problem is infeasible")]
    Infeasible,

    #[error("linear program: {0}")]
    Lp(String),

    #[error("invariant violated at task {k}: {what}")]
    InvariantViolation { k: u64, what: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit status: 1 for configuration problems, 2 for invariant
    /// violations, 3 for oracle infeasibility or solver failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvariantViolation { .. } => 2,
            Error::Infeasible | Error::Lp(_) => 3,
            _ => 1,
        }
    }
}
