//! Crate-wide error type.

use std::path::PathBuf;
use thiserror::Error;

/// Errors produced by any layer of the crate.
#[derive(Error, Debug)]
pub enum Error {
    #[error("unsupported spatial dimension {0}: must be 1, 2, or 3")]
    UnsupportedDimension(usize),

    #[error("singular geometry: {0}")]
    SingularGeometry(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(
        "ADMM penalty parameter too small: zeta = {zeta} leaves zeta*I - Theta indefinite; raise zeta"
    )]
    ZetaTooSmall { zeta: f64 },

    #[error("invalid fold: {0}")]
    InvalidFold(String),

    #[error("parse error in {path} at row {row}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        column: usize,
        message: String,
    },

    #[error("missing artifact {path}: run `spatmca {command}` first")]
    MissingArtifact { path: PathBuf, command: String },

    #[error("model file error: {0}")]
    ModelFile(String),

    #[error("{0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
