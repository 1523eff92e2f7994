use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("self-pair ({0}, {0}) is excluded from the model")]
    SelfPair(usize),

    #[error("{what} index {index} out of range (bound {bound})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        bound: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("K = {k} groups exceeds min(N, L) = {max}")]
    TooManyGroups { k: usize, max: usize },

    #[error("objective became non-finite during the {block} update")]
    NonFinite { block: &'static str },

    #[error("node '{0}' was not held out of the network when the model was fitted")]
    NotHeldOut(String),

    #[error("unknown node id '{0}'")]
    UnknownNode(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("exact enumeration needs N*K <= {bound}, got {nk}")]
    EnumerationBound { nk: usize, bound: usize },

    #[error("model format version {found} is not supported (expected {expected})")]
    FormatVersion { found: u32, expected: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numeric procedure itself, as opposed to bad
    /// input or bad arguments.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NonFinite { .. })
    }

    /// True for errors caused by the caller's arguments.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter(_)
                | Error::TooManyGroups { .. }
                | Error::IndexOutOfRange { .. }
        )
    }
}
