use thiserror::Error;

/// Errors produced by the valuation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("binomial C({n}, {k}) is undefined: k exceeds n")]
    Domain { n: u64, k: u64 },

    #[error("binomial C({n}, {k}) does not fit in 64 bits")]
    Overflow { n: u64, k: u64 },

    #[error("invalid coalition: {0}")]
    InvalidCoalition(String),

    #[error("no utility recorded for coalition {0}")]
    MissingCoalition(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("parse error at {context}: {message}")]
    Parse { context: String, message: String },

    #[error("{method} requires {required} evaluations for n = {n}; guard allows n <= {limit}")]
    GuardExceeded {
        method: &'static str,
        n: usize,
        limit: usize,
        required: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("relative error is undefined when the reference valuation has zero norm")]
    UndefinedMetric,

    #[error("config error: {0}")]
    Config(String),

    #[error("method `{method}` failed at repeat {repeat}: {source}")]
    Method {
        method: String,
        repeat: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by bad input or configuration rather than a
    /// failure while computing.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config(_) | Error::Parse { .. } | Error::InvalidArgument(_) => true,
            Error::Method { source, .. } => source.is_config(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
