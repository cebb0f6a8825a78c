use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, MrpError>;

/// Broad failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Io,
    Numerical,
}

#[derive(Debug, Error)]
pub enum MrpError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("non-positive price {value} at row {row} (date {date}) for ticker {ticker}")]
    NonPositivePrice {
        row: usize,
        date: String,
        ticker: String,
        value: f64,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate portfolio variance w'M0w = {quad:e} (weights lie in the null space of M0)")]
    DegenerateVariance { quad: f64 },

    #[error("M0 is numerically singular (condition number {condition:e}); regularize the spreads or use the crossing criterion")]
    SingularCovariance { condition: f64 },

    #[error("ADMM system matrix 2A + rho*B'B is not positive definite (lambda_min = {lambda_min:e})")]
    IndefiniteSystem { lambda_min: f64 },

    #[error("initial point is infeasible: |Bw0|_1 = {leverage} exceeds budget {budget}")]
    InfeasibleStart { leverage: f64, budget: f64 },

    #[error("solver failed at outer iteration {iteration}: {reason}")]
    SolverFailure {
        iteration: usize,
        reason: String,
        objective_trace: Vec<f64>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config: {0}")]
    Config(String),
}

impl MrpError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        MrpError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            MrpError::InvalidInput(_)
            | MrpError::DimensionMismatch { .. }
            | MrpError::NonPositivePrice { .. }
            | MrpError::InsufficientData(_)
            | MrpError::InfeasibleStart { .. }
            | MrpError::Config(_) => ErrorClass::Validation,
            MrpError::Io { .. } | MrpError::Csv(_) | MrpError::Json(_) => ErrorClass::Io,
            MrpError::DegenerateVariance { .. }
            | MrpError::SingularCovariance { .. }
            | MrpError::IndefiniteSystem { .. }
            | MrpError::SolverFailure { .. } => ErrorClass::Numerical,
        }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> MrpError {
    MrpError::InvalidInput(msg.into())
}
