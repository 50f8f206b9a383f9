use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    /// The integrator produced a non-finite state.
    #[error("divergence{}{}", iteration.map(|k| format!(" in iteration {k}")).unwrap_or_default(), time.map(|t| format!(" at t = {t}")).unwrap_or_default())]
    Divergence {
        time: Option<f64>,
        iteration: Option<usize>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("sequence alignment error: expected {expected} samples, found {found}")]
    Alignment { expected: usize, found: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("degenerate motion: {0}")]
    DegenerateMotion(String),

    #[error("undefined benchmark: {0}")]
    UndefinedBenchmark(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Attaches a time stamp and iteration index to a divergence error, keeping
    /// any value already present.
    pub fn at(self, time: Option<f64>, iteration: Option<usize>) -> Self {
        match self {
            Error::Divergence {
                time: t,
                iteration: k,
            } => Error::Divergence {
                time: t.or(time),
                iteration: k.or(iteration),
            },
            other => other,
        }
    }
}
