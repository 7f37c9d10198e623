use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed on-disk data. `offset` is the byte position where the
    /// problem was detected.
    #[error("format error at byte {offset}: {msg}")]
    Format { offset: u64, msg: String },

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("shape mismatch in {context}: {msg}")]
    Shape { context: &'static str, msg: String },

    #[error("unknown channels requested: {0:?}")]
    UnknownChannels(Vec<String>),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("class {class} has {count} trials, too few for {needed} folds/splits")]
    TooFewTrials {
        class: usize,
        count: usize,
        needed: usize,
    },

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("{0}")]
    Stats(String),
}

pub type Result<T> = std::result::Result<T, Error>;
