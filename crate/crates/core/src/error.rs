use thiserror::Error;

use crate::trainer::Snapshot;

pub type Result<T> = std::result::Result<T, LabError>;

#[derive(Debug, Error)]
pub enum LabError {
    /// Shapes or lengths that do not line up.
    #[error("structural error: {0}")]
    Structural(String),

    /// NaN or infinite values where finite ones are required.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Argument outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("LP solver failed{}: {message}", index.map(|i| format!(" on sample {i}")).unwrap_or_default())]
    Solver {
        index: Option<usize>,
        message: String,
    },

    #[error("restricted Hessian is numerically singular (condition estimate {condition:.3e})")]
    Singular { condition: f64 },

    #[error("gradient descent diverged at step {step}; learning rate is likely too large")]
    Divergence { step: usize, last: Box<Snapshot> },

    #[error("weak-regularization path failed at lambda = {lambda:e}: {source}")]
    PathDivergence {
        lambda: f64,
        #[source]
        source: Box<LabError>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl LabError {
    pub(crate) fn structural(msg: impl Into<String>) -> Self {
        LabError::Structural(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        LabError::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        LabError::Config(msg.into())
    }
}
