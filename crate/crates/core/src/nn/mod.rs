//! Layers of the 1D CNN with hand-written analytic backward passes.

mod checkpoint;
mod model;
pub mod ops;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
pub use model::{ClientModel, LinearHead, LocalModel, ModelSpec, ServerOpt};

use crate::tensor::ShapeError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error("{layer}: backward called without a cached forward input")]
    MissingCache { layer: &'static str },
    #[error("label {label} at batch index {index} outside 0..{classes}")]
    LabelOutOfRange {
        index: usize,
        label: usize,
        classes: usize,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
}
