//! Reduced "desk-scale" settings shared by the CLI and the acceptance suite.

use std::path::Path;

use sudokuformer_core::SplitCondition;
use sudokuformer_model::{ModelConfig, PeScheme};

use crate::eval::EvalOptions;
use crate::matrix::{CellSpec, MatrixSpec};
use crate::regime::{Regime, RegimeSpec};

pub const DESK_UPDATES: u64 = 10_000;
/// Same share of the run as 20,000 of 70,000 updates.
pub const DESK_PHASE1: u64 = 2_857;
pub const DESK_SEEDS: [u64; 3] = [0, 1, 2];

pub fn desk_model() -> ModelConfig {
    ModelConfig::sized(128, 3, 8, 512)
}

pub fn desk_regime(regime: Regime) -> RegimeSpec {
    RegimeSpec {
        regime,
        total_updates: DESK_UPDATES,
        curriculum_phase1: DESK_PHASE1,
        eval_every: 0,
        checkpoint_every: 2_500,
        ..RegimeSpec::default()
    }
}

fn desk_matrix(cells: Vec<CellSpec>, data_root: &Path, out_root: &Path) -> MatrixSpec {
    MatrixSpec {
        cells,
        seeds: DESK_SEEDS.to_vec(),
        model: desk_model(),
        regime: desk_regime(Regime::HsOnly),
        eval: EvalOptions::default(),
        data_root: data_root.to_path_buf(),
        out_root: out_root.to_path_buf(),
    }
}

/// Columns split under each training regime, sinusoidal and unpadded.
pub fn desk_trend(data_root: &Path, out_root: &Path) -> MatrixSpec {
    let cells = Regime::ALL
        .into_iter()
        .map(|regime| CellSpec {
            split: SplitCondition::Columns,
            regime,
            pe: PeScheme::Sinusoidal,
            padded: false,
        })
        .collect();
    desk_matrix(cells, data_root, out_root)
}

/// Digits split, simultaneous regime: unpadded sinusoidal baseline against
/// padding, ALiBi and SRL.
pub fn desk_pe_effect(data_root: &Path, out_root: &Path) -> MatrixSpec {
    let cell = |pe, padded| CellSpec {
        split: SplitCondition::Digits,
        regime: Regime::Simultaneous,
        pe,
        padded,
    };
    desk_matrix(
        vec![
            cell(PeScheme::Sinusoidal, false),
            cell(PeScheme::Sinusoidal, true),
            cell(PeScheme::Alibi, false),
            cell(PeScheme::Srl, false),
        ],
        data_root,
        out_root,
    )
}
