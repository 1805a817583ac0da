use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("mask error: {0}")]
    Mask(String),
    #[error("loss error: {0}")]
    Loss(String),
    #[error("tape error: {0}")]
    Tape(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
