use std::error;
use std::fmt;
use std::io;
use std::result;

/// A type alias for `Result<T, Error>`.
pub type Result<T> = result::Result<T, Error>;

/// Errors produced by dataset validation, model fitting, prediction, and I/O.
#[derive(Debug)]
pub enum Error {
    /// Two matrices or vectors that must agree in shape do not.
    DimensionMismatch(String),
    /// An input contains NaN or infinite entries.
    NonFiniteInput(String),
    /// An argument is outside its documented range (e.g. `k` not in `[1, N]`).
    InvalidArgument(String),
    /// Two rows that must be distinct are identical (indices of the pair).
    DuplicateRows(usize, usize),
    /// A linear system is degenerate beyond what the minimum-norm fallback covers.
    DegenerateSystem(String),
    /// A size guard refused an input (e.g. the UPGMA dense store cap).
    SizeLimitExceeded { n: usize, cap: usize },
    /// An underlying I/O failure.
    Io(io::Error),
    /// A CSV or JSON document could not be parsed.
    Parse(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch(msg) => write!(f, "dimension mismatch: {msg}"),
            Error::NonFiniteInput(msg) => write!(f, "non-finite input: {msg}"),
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::DuplicateRows(i, j) => {
                write!(f, "rows {i} and {j} are identical but must be distinct")
            }
            Error::DegenerateSystem(msg) => write!(f, "degenerate system: {msg}"),
            Error::SizeLimitExceeded { n, cap } => {
                write!(f, "input size {n} exceeds the configured cap {cap}")
            }
            Error::Io(e) => write!(f, "I/O error: {e}"),
            Error::Parse(msg) => write!(f, "parse error: {msg}"),
        }
    }
}

impl error::Error for Error {
    fn source(&self) -> Option<&(dyn error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<io::Error> for Error {
    fn from(e: io::Error) -> Self {
        Error::Io(e)
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
