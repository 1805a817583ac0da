//! Transformer encoder over 36 grid cells followed by a token sequence.
//!
//! Grid cells see only each other; text positions see the grid and earlier
//! text. Logits at text position `j` predict token `j + 1`.

pub mod checkpoint;
pub mod config;
pub mod error;
pub mod generate;
pub mod model;
pub mod positional;

pub use config::{Activation, ModelConfig, NormPlacement, PeScheme};
pub use error::ModelError;
pub use generate::{generate_greedy, GenRequest, Generation, GENERATION_CAP};
pub use model::{Batch, ForwardOutput, Mode, Model};
pub use positional::{
    alibi_bias, alibi_slopes, attention_mask, sinusoidal_pe, srl_draw, srl_labels, GRID_SLOTS,
};
