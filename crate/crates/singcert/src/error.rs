use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("point leaves the chart: {0}")]
    OutOfChart(String),
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("Legendre form is singular or ill-conditioned (condition number {0:e})")]
    SglcFailure(f64),
    #[error("abnormal candidate rejected: F0 = {0:e}")]
    Abnormal(f64),
    #[error("structure check failed: {0}")]
    Structure(String),
    #[error("unresolvable bracket word {0}")]
    UnresolvedWord(String),
    #[error("unsupported on this backend: {0}")]
    Unsupported(String),
    #[error("integration failure: {0}")]
    Integration(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
