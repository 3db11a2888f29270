use thiserror::Error;

/// Errors produced by index construction, querying and persistence.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("degenerate attribute separation: {0}")]
    DegenerateSeparation(String),

    #[error("unknown attribute class")]
    UnknownAttribute,

    #[error("invalid priority order: {0}")]
    InvalidPriority(String),

    #[error("invalid range: lower bound exceeds upper bound in component {0}")]
    InvalidRange(usize),

    #[error("degenerate line segment (zero length)")]
    DegenerateLine,

    #[error(
        "radius too large for this index: required {required:.6}, indexed maximum {available:.6}; \
         rebuild the range index with a larger Hausdorff slack"
    )]
    RadiusTooLarge { required: f64, available: f64 },

    #[error("parse error at byte offset {offset}: {message}")]
    Parse { offset: u64, message: String },

    #[error("unsupported index file version {0}")]
    UnsupportedVersion(u32),

    #[error("corrupt index file: {0}")]
    Corrupt(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::InvalidDimension(msg.into())
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
