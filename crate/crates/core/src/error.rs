use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid clause: {0}")]
    InvalidClause(String),

    #[error("assignment has length {got}, formula has {expected} variables")]
    AssignmentLength { expected: usize, got: usize },

    #[error("instance too large for exhaustive search: {0}")]
    TooLarge(String),

    #[error("DIMACS parse error on line {line}: {msg}")]
    Dimacs { line: usize, msg: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("no bracketing interval: {0}")]
    Bracket(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
