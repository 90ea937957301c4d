use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CoreError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid grid layout: {0}")]
    InvalidLayout(String),

    #[error("cell index {index} out of range for a {rows}x{cols} grid")]
    CellOutOfRange { index: usize, rows: u32, cols: u32 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("roster error: {0}")]
    Roster(String),

    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}
