use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the library can report.
///
/// The variants group into three families that callers (the CLI in
/// particular) map onto exit codes: I/O and parse problems, invariant
/// violations on the inputs, and numerical failures (poles, solver
/// non-convergence, empty brackets).
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("malformed header: {0}")]
    Header(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("no convergence: {message} (best residual {best_residual:e})")]
    NoConvergence { message: String, best_residual: f64 },

    #[error("root search failed: {0}")]
    Search(String),

    #[error("singular system: {0}")]
    Singular(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the numbers rather than by the inputs'
    /// shape or availability.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Domain(_) | Error::NoConvergence { .. } | Error::Search(_) | Error::Singular(_)
        )
    }
}
