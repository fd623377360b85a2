use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("axis {axis} is not valid for a {dim}-dimensional grid")]
    InvalidAxis { axis: usize, dim: usize },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value at node {node}")]
    NonFinite { node: usize },

    #[error("numerical failure at step {step}, iteration {iteration}: {what}")]
    NumericalFailure {
        step: u64,
        iteration: usize,
        what: &'static str,
    },

    #[error("fixed point did not converge at step {step} (t = {t}): residual {residual:e} after {iterations} iterations")]
    NotConverged {
        step: u64,
        t: f64,
        iterations: usize,
        residual: f64,
    },

    #[error("{context}: {source}")]
    Annotated {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed snapshot at byte {offset}: {message}")]
    Snapshot { offset: u64, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Annotated {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// The underlying error with all context layers stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::Annotated { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn is_not_converged(&self) -> bool {
        matches!(self.root(), Error::NotConverged { .. })
    }

    pub fn is_config(&self) -> bool {
        matches!(self.root(), Error::Config(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
