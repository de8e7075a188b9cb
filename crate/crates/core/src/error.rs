use thiserror::Error;

/// Errors surfaced by the library, grouped so the CLI can map them to
/// distinct exit codes (config / data / runtime).
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor shape mismatch; names both offending shapes.
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    /// An operation contract was violated (e.g. non-scalar loss).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Invalid configuration value.
    #[error("config error: {0}")]
    Config(String),

    /// Problem in the input data or a data file.
    #[error("data error: {0}")]
    Data(String),

    /// Parse failure with file/line context.
    #[error("parse error at {file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },

    /// Versioned container or checkpoint with wrong/unknown format.
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
}
