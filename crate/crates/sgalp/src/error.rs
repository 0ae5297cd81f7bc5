use thiserror::Error;

use crate::lp::SolverError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("lp solver: {0}")]
    Solver(#[from] SolverError),
    #[error("constraint generation hit the cap of {cap} cuts (last slack {last_slack:.6e})")]
    CutCap { cap: usize, last_slack: f64 },
    #[error("diagnostic: {0}")]
    Diagnostic(String),
    #[error("config error at `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Dimension { expected, got });
    }
    Ok(())
}
