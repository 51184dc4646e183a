use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("dimension mismatch in {op}: {lhs} vs {rhs}")]
    DimensionMismatch {
        op: &'static str,
        lhs: String,
        rhs: String,
    },

    #[error("unsupported mode: {0}")]
    UnsupportedMode(String),

    #[error("degenerate dataset: {0}")]
    DegenerateData(String),

    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),

    #[error("cell has no finite loss values")]
    EmptyCell,

    #[error("insufficient input: {0}")]
    InsufficientInput(String),

    #[error("config error at `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dims(op: &'static str, lhs: impl ToString, rhs: impl ToString) -> Self {
        Error::DimensionMismatch {
            op,
            lhs: lhs.to_string(),
            rhs: rhs.to_string(),
        }
    }

    pub(crate) fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            msg: msg.into(),
        }
    }
}
