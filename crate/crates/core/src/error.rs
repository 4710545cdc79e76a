use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in `{what}`: expected {expected}, got {got}")]
    Dimension {
        what: String,
        expected: String,
        got: String,
    },

    #[error("singular {what} (reciprocal condition {rcond:.3e})")]
    Singular { what: String, rcond: f64 },

    #[error("{source} at t = {time:.6}")]
    AtTime {
        time: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("relative degree failure: output row {row} has no input authority")]
    RelativeDegree { row: usize },

    #[error("implicit solve did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("trajectory grids differ: {0}")]
    GridMismatch(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(what: impl Into<String>, expected: impl ToString, got: impl ToString) -> Self {
        Error::Dimension {
            what: what.into(),
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    pub(crate) fn at_time(self, time: f64) -> Self {
        match self {
            e @ Error::AtTime { .. } => e,
            e => Error::AtTime {
                time,
                source: Box::new(e),
            },
        }
    }

    /// Unwraps time annotations.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtTime { source, .. } => source.root(),
            e => e,
        }
    }
}
