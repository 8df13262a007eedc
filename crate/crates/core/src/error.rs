use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left} vs {right}")]
    Shape {
        op: &'static str,
        left: String,
        right: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("cosine undefined for a zero vector")]
    ZeroVector,

    #[error("batch of {0} rows is too small for batch statistics (need at least 2)")]
    BatchTooSmall(usize),

    #[error("training diverged: non-finite value in {0}")]
    Diverged(String),

    #[error("degenerate matrix: row {row} has norm {norm:e} after projection")]
    Degenerate { row: usize, norm: f64 },

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },

    #[error("unsupported format version {found} for {format} (supported: {supported})")]
    Version {
        format: &'static str,
        found: u16,
        supported: String,
    },

    #[error("truncated {format} data: {detail}")]
    Truncated {
        format: &'static str,
        detail: String,
    },

    #[error("checksum mismatch: stored {stored:016x}, computed {computed:016x}")]
    Checksum { stored: u64, computed: u64 },

    #[error("malformed {format} data: {detail}")]
    Malformed {
        format: &'static str,
        detail: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err(
    op: &'static str,
    left: impl std::fmt::Display,
    right: impl std::fmt::Display,
) -> Error {
    Error::Shape {
        op,
        left: left.to_string(),
        right: right.to_string(),
    }
}
