use std::path::PathBuf;

use sudokuformer_core::{FormatError, GenError, SudokuError};
use sudokuformer_model::ModelError;
use sudokuformer_numerics::NumericsError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("missing dataset {0}")]
    MissingDataset(PathBuf),
    #[error("training diverged at update {update}: {task} loss is {loss}")]
    Divergence {
        update: u64,
        task: String,
        loss: f64,
    },
    #[error("probe: {0}")]
    Probe(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Sudoku(#[from] SudokuError),
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
