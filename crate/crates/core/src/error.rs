use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("symbol {symbol} out of range for alphabet of size {alphabet}")]
    SymbolOutOfRange { symbol: u32, alphabet: u32 },

    #[error("invalid stream: {0}")]
    InvalidStream(String),

    #[error("invalid coloring: {0}")]
    InvalidColoring(String),

    #[error("invalid dimensions: {0}")]
    InvalidDims(String),

    #[error("invalid table: {0}")]
    InvalidTable(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("budget exceeded: {what} (requested {requested}, cap {cap})")]
    Budget {
        what: &'static str,
        requested: u128,
        cap: u128,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}
