use thiserror::Error;

use crate::gravity::simplex::LpStatus;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no flow data for year {0}")]
    NoSuchYear(i32),

    #[error("design matrix is rank deficient; dependent columns: {columns:?}")]
    SingularDesign { columns: Vec<String> },

    #[error("predictor `{0}` has zero variance")]
    ZeroVariancePredictor(String),

    #[error("response must be strictly positive (row {row} is {value})")]
    NonPositiveResponse { row: usize, value: f64 },

    #[error("{what} did not converge after {iterations} iterations")]
    Unconverged {
        what: &'static str,
        iterations: usize,
        trace: Vec<f64>,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("linear program failed with status {0:?}")]
    LpFailure(LpStatus),

    #[error("no variation in {0}")]
    InsufficientVariation(String),

    #[error("node `{node}` cannot reach {unreachable:?}")]
    UnreachableNode {
        node: String,
        unreachable: Vec<String>,
    },

    #[error("correlation undefined: `{0}` has zero variance")]
    UndefinedCorrelation(String),

    #[error("destination column `{0}` has zero variance")]
    ZeroVarianceColumn(String),

    #[error("value out of domain: {0}")]
    DomainError(String),

    #[error("sample has zero variance")]
    ZeroVariance,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{file}: schema mismatch: expected columns {expected:?}, found {found:?}")]
    Schema {
        file: String,
        expected: Vec<String>,
        found: Vec<String>,
    },

    #[error("{file}: row {row}, column `{column}`: {message}")]
    Parse {
        file: String,
        row: usize,
        column: String,
        message: String,
    },

    #[error("dataset failed validation:\n{0}")]
    Validation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    /// Process exit code used by the pipeline: 1 for data problems, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::SingularDesign { .. }
            | Error::ZeroVariancePredictor(_)
            | Error::Unconverged { .. }
            | Error::LpFailure(_)
            | Error::InsufficientVariation(_)
            | Error::UnreachableNode { .. }
            | Error::UndefinedCorrelation(_)
            | Error::ZeroVarianceColumn(_)
            | Error::ZeroVariance => 2,
            _ => 1,
        }
    }
}
