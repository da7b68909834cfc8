//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied argument violates a precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Matrix/grid shapes do not line up.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// The correlation matrix is not positive definite at the requested
    /// nugget; refitting with a larger nugget usually resolves this.
    #[error("correlation matrix is not positive definite (nugget = {nugget}); try a larger nugget")]
    SingularCorrelation { nugget: f64 },

    /// Least-squares design matrix is rank deficient.
    #[error("rank-deficient regression design: {0}")]
    RankDeficient(String),

    /// Likelihood optimization failed after all restarts.
    #[error("hyperparameter optimization failed: {0}")]
    OptimizationFailed(String),

    /// A per-coefficient model fit failed inside the functional metamodel.
    #[error("model fit failed for coefficient at rank {rank} (flat index {flat_index}): {source}")]
    CoefficientFit {
        rank: usize,
        flat_index: usize,
        #[source]
        source: Box<Error>,
    },

    /// An evaluator aborted; the offending input point is reported.
    #[error("evaluator failed at x = {x:?}: {message}")]
    EvaluatorFailed { x: Vec<f64>, message: String },

    /// Singular input for the Campbell2D function (x1 = 0 or x5 = 0).
    #[error("Campbell2D domain error: {0}")]
    Domain(String),

    /// rMAE against a reference whose grid mean is zero is undefined.
    #[error("reference map has zero grid mean; rMAE undefined")]
    ZeroMeanReference,

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }
}
