use thiserror::Error;

/// Errors raised across the crate.
///
/// Each variant maps onto one failure class of the command line tool
/// (see [`Error::exit_code`]).
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("non-finite value in {op}")]
    Numeric { op: &'static str },

    #[error("non-finite loss {loss} at round {round}, pseudo-episode {index}")]
    NonFiniteLoss { loss: f64, round: usize, index: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("insufficient data: {0}")]
    Capacity(String),

    #[error("unsupported shot count {shots}: division schemes need at least 2 shots")]
    UnsupportedShotCount { shots: usize },

    #[error("data error: {0}")]
    Data(String),

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Shape {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Process exit code: 2 configuration/usage, 3 numeric failure, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numeric { .. } | Error::NonFiniteLoss { .. } => 3,
            Error::Io { .. } | Error::Parse { .. } => 4,
            _ => 2,
        }
    }
}
