use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed container or header (e.g. a truncated RIFF chunk).
    #[error("format error: {0}")]
    Format(String),

    /// Well-formed input in an encoding we do not handle.
    #[error("unsupported format: {0}")]
    Unsupported(String),

    #[error("index out of bounds: {0}")]
    Bounds(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    /// Input present but too short/small for the operation.
    #[error("insufficient input: {0}")]
    Insufficient(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// API misuse: calling an operation outside its contract.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("training diverged (non-finite loss) at epoch {epoch}")]
    Divergence { epoch: usize },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
}

pub type Result<T> = std::result::Result<T, Error>;
