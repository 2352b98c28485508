use thiserror::Error;

pub type Result<T> = std::result::Result<T, BenchError>;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("config {path}: {reason}")]
    Config { path: String, reason: String },
    #[error("bad grid spec {0:?}")]
    Grid(String),
    #[error("nothing to plot")]
    NoRecords,
    #[error(transparent)]
    Core(#[from] amp2_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
