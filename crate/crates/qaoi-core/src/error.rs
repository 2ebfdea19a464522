use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid penalty: {0}")]
    InvalidPenalty(String),
    #[error("grid error: {0}")]
    Grid(String),
    #[error("solver error: {0}")]
    Solver(String),
    #[error("policy error: {0}")]
    Policy(String),
    #[error("simulation error: {0}")]
    Simulation(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
