use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape { op: &'static str, left: Vec<usize>, right: Vec<usize> },

    #[error("non-finite value produced by node `{node}`")]
    NonFinite { node: String },

    #[error("incompatible parameter sets: {0}")]
    Incompatible(String),

    #[error("idx parse error at byte {offset}: {msg}")]
    Parse { offset: usize, msg: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("config field `{field}`: {msg}")]
    Config { field: String, msg: String },

    #[error("round {round}: {source}")]
    Round {
        round: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config { field: field.into(), msg: msg.into() }
    }

    pub(crate) fn in_round(self, round: u64) -> Self {
        match self {
            e @ Error::Round { .. } => e,
            other => Error::Round { round, source: Box::new(other) },
        }
    }
}
