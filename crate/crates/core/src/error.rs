use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the screening / knockoff toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("input too large for the naive oracle: n = {n} exceeds {limit}")]
    InputTooLarge { n: usize, limit: usize },

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("need at least {needed} observations, got {got}")]
    TooFewObservations { needed: usize, got: usize },

    #[error("feature index {0} is out of range")]
    UnknownFeature(usize),

    #[error("Pearson SIS only supports a univariate response (got q = {0})")]
    MultivariateResponseUnsupported(usize),

    #[error("column {0} has zero variance")]
    DegenerateColumn(usize),

    #[error("SDP solver failed: {0}")]
    SolverFailure(String),

    #[error("h vector is infeasible: lambda_min(G) = {lambda_min:e}")]
    InfeasibleH { lambda_min: f64 },

    #[error("alpha must lie in (0, 1], got {0}")]
    InvalidAlpha(f64),

    #[error("invalid split: n = {n}, n1 = {n1}")]
    InvalidSplit { n: usize, n1: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown model id `{0}`")]
    UnknownModel(String),

    #[error("{path}: parse error at row {row}: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("{path}: missing column `{column}`")]
    MissingColumn { path: PathBuf, column: String },

    #[error("{path}: non-numeric cell at row {row}, column `{column}`: {value:?}")]
    NonNumericCell {
        path: PathBuf,
        row: usize,
        column: String,
        value: String,
    },

    #[error("replication with seed {seed} failed: {source}")]
    Replication {
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for errors caused by the user's data or parameters rather than a bug.
    pub fn is_data_error(&self) -> bool {
        match self {
            Error::Replication { source, .. } => source.is_data_error(),
            Error::SolverFailure(_) | Error::InfeasibleH { .. } | Error::Json(_) => false,
            _ => true,
        }
    }
}
