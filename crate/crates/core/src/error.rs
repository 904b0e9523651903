//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Two operands (or an operand and an attribute) disagree on shape.
    #[error("{op}: shape mismatch: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    /// An attribute or argument is out of contract for the named operation.
    #[error("{op}: {msg}")]
    InvalidArg { op: &'static str, msg: String },

    /// A primitive produced NaN or Inf. Never propagated silently.
    #[error("{op}: non-finite value produced")]
    NonFinite { op: &'static str },

    /// Graph misuse: backward without forward, non-scalar loss, detached node.
    #[error("graph: {0}")]
    Graph(String),

    /// Malformed or inconsistent input data (carries file/line/sample context).
    #[error("data: {0}")]
    Data(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(op: &'static str, msg: impl Into<String>) -> Self {
        Error::InvalidArg { op, msg: msg.into() }
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
}
