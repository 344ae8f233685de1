use std::path::PathBuf;

use thiserror::Error;

use crate::map::Diagnostic;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown {what} {id}")]
    Lookup { what: &'static str, id: u64 },

    #[error("budget error: {0}")]
    Budget(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("point {0} is already selected")]
    Duplicate(usize),

    #[error("point {0} has no observations")]
    EmptyContribution(usize),

    #[error("point lies behind the camera (depth {depth:.3e})")]
    BehindCamera { depth: f64 },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("rank-deficient point block for point {0}")]
    RankDeficient(usize),

    #[error("cholesky downdate broke positive definiteness")]
    NumericalBreakdown,

    #[error("under-constrained problem, offending frames {frames:?}")]
    UnderConstrained { frames: Vec<usize> },

    #[error("{what}: {count} combinations exceed the cap of {cap}")]
    Blowup { what: &'static str, count: u128, cap: u128 },

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("invalid world spec: {0}")]
    Spec(String),

    #[error("degenerate problem: {0}")]
    Degenerate(String),

    #[error("map failed validation with {} issue(s); first: {}", .0.len(), .0.first().map(|d| d.to_string()).unwrap_or_default())]
    Validation(Vec<Diagnostic>),

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit code: 2 usage, 3 data/validation, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 2,
            Error::NotPositiveDefinite
            | Error::RankDeficient(_)
            | Error::NumericalBreakdown
            | Error::UnderConstrained { .. }
            | Error::Degenerate(_) => 4,
            _ => 3,
        }
    }
}
