use thiserror::Error;

use crate::grid::HouseKind;

#[derive(Debug, Error)]
pub enum SudokuError {
    #[error("cell ({row}, {col}) is outside the 6x6 grid")]
    InvalidCell { row: u8, col: u8 },
    #[error("{kind} index {index} is outside 1..=6")]
    InvalidHouse { kind: HouseKind, index: u8 },
    #[error("digit {0} is outside 1..=6")]
    InvalidDigit(u8),
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("digit shift {0} is outside 0..=5")]
    InvalidShift(u8),
    #[error("parse error: {0}")]
    Parse(String),
}

#[derive(Debug, Error)]
pub enum GenError {
    #[error("sampling budget exhausted after {attempts} rejections ({context})")]
    BudgetExhausted { attempts: usize, context: String },
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("invalid generation request: {0}")]
    InvalidRequest(String),
    #[error("output path {0} is used more than once")]
    DuplicateOutput(std::path::PathBuf),
    #[error("instance on line {line} of {path} failed verification: {source}")]
    Verification {
        path: std::path::PathBuf,
        line: usize,
        #[source]
        source: SudokuError,
    },
    #[error(transparent)]
    Sudoku(#[from] SudokuError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("cannot encode instance: {0}")]
    Encode(String),
    #[error("unknown token id {0}")]
    UnknownId(u32),
    #[error("unknown token `{0}`")]
    UnknownToken(String),
    #[error("loss mask: {0}")]
    Mask(String),
}
