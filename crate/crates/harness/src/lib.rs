//! Training regimes, evaluation and attention probes.

pub mod error;
pub mod eval;
pub mod matrix;
pub mod presets;
pub mod probe;
pub mod regime;
pub mod train;

pub use error::HarnessError;
pub use eval::{evaluate, score, EvalOptions, EvalReport, ErrorTaxonomy, Score, TaskReport};
pub use matrix::{run_condition_matrix, CellSpec, MatrixRow, MatrixSpec};
pub use probe::{attention_map, probe_attention, write_probe, AttentionProbeResult, ProbeMap};
pub use regime::{Regime, RegimeSpec};
pub use train::{train, train_with, TrainData, TrainOutcome, UpdateRecord};
