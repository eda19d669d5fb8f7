use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value violates a documented precondition.
    #[error("invalid {field}: {reason}")]
    Invalid { field: String, reason: String },

    #[error("{}:{line}:{column}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("training diverged: non-finite loss in epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("run {method} seed {seed} failed: {source}")]
    Run {
        method: String,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by bad input rather than a failing computation.
    pub fn is_usage(&self) -> bool {
        match self {
            Error::Invalid { .. } | Error::Parse { .. } | Error::Shape(_) | Error::Empty(_) => true,
            Error::Diverged { .. } | Error::Io(_) => false,
            Error::Run { source, .. } => source.is_usage(),
        }
    }
}
