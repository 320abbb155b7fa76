use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Bad knob value (unsupported constellation name, kappa below 1, ...).
    #[error("configuration error: {0}")]
    Config(String),
    /// Malformed call arguments (length mismatch, empty input, wrong bit count).
    #[error("argument error: {0}")]
    Argument(String),
    /// Problem size exceeds what the requested method can handle.
    #[error("capacity error: {0}")]
    Capacity(String),
    /// Input outside the mathematical domain of a formula.
    #[error("domain error: {0}")]
    Domain(String),
    /// Incremental state used out of order.
    #[error("state error: {0}")]
    State(String),
    /// Received symbol does not belong to the constellation or its negation.
    #[error("decode error: {0}")]
    Decode(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
