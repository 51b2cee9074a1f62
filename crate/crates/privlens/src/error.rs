use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("parse error at {line}:{col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },
    #[error("unresolved name: {0}")]
    Unresolved(String),
    #[error("duplicate declaration: {0}")]
    Duplicate(String),
    #[error("model invalid: {}", .0.join("; "))]
    ModelInvalid(Vec<String>),
    #[error("{op} expects {expected} arguments, got {got}")]
    Arity { op: String, expected: usize, got: usize },
    #[error("unknown actor: {0}")]
    UnknownActor(String),
    #[error("address {0} does not belong to an actor")]
    AddressNotOwned(String),
    #[error("entity item {0} cannot occur inside a message")]
    EntityInTerm(String),
    #[error("unknown name in formula: {0}")]
    UnknownName(String),
    #[error("requirement suites differ: {0}")]
    SuiteMismatch(String),
    #[error("invalid transmission: {0}")]
    BadTransmission(String),
    #[error("io error on {path}: {msg}")]
    Io { path: String, msg: String },
}

impl Error {
    /// True for errors that come from resolving names after parsing.
    pub fn is_resolution(&self) -> bool {
        matches!(self, Error::Unresolved(_) | Error::Duplicate(_) | Error::UnknownActor(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
