use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A line of an input file failed to parse.
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    /// An argument or input value violates a documented precondition.
    #[error("invalid input: {0}")]
    Invalid(String),
    /// The instance admits no feasible seed assignment.
    #[error("infeasible instance: {0}")]
    Infeasible(String),
    /// An exhaustive oracle refused an instance beyond its enumeration cutoff.
    #[error("instance too large: {0}")]
    TooLarge(String),
    /// An RR-collection cache file is malformed or mismatched.
    #[error("bad collection cache: {0}")]
    Cache(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
