use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("wav error on {path}: {message}")]
    Wav { path: PathBuf, message: String },
    #[error("unsupported audio encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("empty audio: {0}")]
    EmptyAudio(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("signal too short: need at least {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("empty corpus under {0}")]
    EmptyCorpus(PathBuf),
    #[error("empty class: {0}")]
    EmptyClass(String),
    #[error("degenerate statistic: {0}")]
    Degenerate(String),
    #[error("no convergence: {0}")]
    NoConvergence(String),
    #[error("malformed input {what}: {message}")]
    Malformed { what: String, message: String },
    #[error("config mismatch: {0}")]
    ConfigMismatch(String),
    #[error("clip {id}: {source}")]
    Clip {
        id: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn malformed(what: impl Into<String>, message: impl ToString) -> Self {
        Error::Malformed {
            what: what.into(),
            message: message.to_string(),
        }
    }

    /// Attach the failing clip id to an upstream error.
    pub fn for_clip(self, id: &str) -> Self {
        match self {
            e @ Error::Clip { .. } => e,
            e => Error::Clip {
                id: id.to_string(),
                source: Box::new(e),
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
