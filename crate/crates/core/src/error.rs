use thiserror::Error;

use crate::solve::SolveError;

/// Errors surfaced by interval construction, multiplicity handling and the
/// simulation engine.
#[derive(Debug, Error)]
pub enum Error {
    /// A method or scenario parameter is outside its admissible range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// The observation lies in the region removed by selection, so no
    /// conditional interval exists for it.
    #[error("estimate not selected: y = {y} lies inside the truncated region")]
    NotSelected { y: f64 },

    /// A value was requested outside the support of a distribution.
    #[error("outside support: {0}")]
    Domain(String),

    /// No interval-estimation rule was applied because nothing was selected.
    #[error("no parameters selected")]
    NothingSelected,

    #[error(transparent)]
    Solve(#[from] SolveError),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed input at line {line}: {message}")]
    Input { line: u64, message: String },

    #[error("scenario file: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parameter(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
