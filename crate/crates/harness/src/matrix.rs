//! Condition grids: one training run per (cell, seed), scored on WD and OOD
//! Hidden Single sets and gathered into one CSV.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sudokuformer_core::datagen::{load_set, DatasetSpec, SetKind, MANIFEST_FILE};
use sudokuformer_core::{SplitCondition, SplitSpec, Task};
use sudokuformer_model::{ModelConfig, PeScheme};

use crate::error::HarnessError;
use crate::eval::{evaluate, EvalOptions};
use crate::regime::{Regime, RegimeSpec};
use crate::train::{train, TrainData};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSpec {
    pub split: SplitCondition,
    pub regime: Regime,
    pub pe: PeScheme,
    pub padded: bool,
}

impl CellSpec {
    pub fn label(&self) -> String {
        format!(
            "{}_{}_{}_{}",
            self.split.as_str(),
            self.regime.as_str(),
            self.pe.as_str(),
            if self.padded { "padded" } else { "unpadded" }
        )
    }

    /// Dataset directory under the data root. Padded cells read data whose
    /// Naked Single puzzles carry five queries.
    pub fn dataset_dir(&self, root: &Path) -> PathBuf {
        let kind = match self.regime {
            Regime::HsOnly => "hs_only",
            _ => "multi_task",
        };
        let suffix = if self.padded { "_padded" } else { "" };
        root.join(format!("{}_{kind}{suffix}", self.split.as_str()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixSpec {
    pub cells: Vec<CellSpec>,
    pub seeds: Vec<u64>,
    /// Template; the cell sets the positional scheme and the run sets the seed.
    pub model: ModelConfig,
    /// Template; the cell sets regime and padding and the run sets the seed.
    pub regime: RegimeSpec,
    pub eval: EvalOptions,
    pub data_root: PathBuf,
    pub out_root: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixRow {
    pub condition: String,
    pub seed: u64,
    pub wd_final: f64,
    pub wd_full: f64,
    pub ood_final: f64,
    pub ood_full: f64,
    pub wd_gate: bool,
}

pub const MATRIX_CSV: &str = "matrix.csv";
const MATRIX_HEADER: &str = "condition,seed,wd_final,wd_full,ood_final,ood_full,wd_gate";

impl MatrixRow {
    fn csv(&self) -> String {
        format!(
            "{},{},{:.6},{:.6},{:.6},{:.6},{}",
            self.condition,
            self.seed,
            self.wd_final,
            self.wd_full,
            self.ood_final,
            self.ood_full,
            self.wd_gate
        )
    }
}

/// Dataset directories a matrix reads, each with the spec that builds it.
/// Padded cells get five-query Naked Single data.
pub fn matrix_datasets(spec: &MatrixSpec, seed: u64) -> Vec<(PathBuf, DatasetSpec)> {
    let mut out: Vec<(PathBuf, DatasetSpec)> = Vec::new();
    for cell in &spec.cells {
        let dir = cell.dataset_dir(&spec.data_root);
        if out.iter().any(|(d, _)| d == &dir) {
            continue;
        }
        let split = SplitSpec::with_defaults(cell.split);
        let mut data = match cell.regime {
            Regime::HsOnly => DatasetSpec::hs_only(split, seed),
            _ => DatasetSpec::multi_task(split, seed),
        };
        if cell.padded {
            data.ns_queries = 5;
            data.ns_padded = true;
        }
        out.push((dir, data));
    }
    out
}

/// Mean OOD final-answer accuracy of a cell's rows that pass the WD gate.
pub fn mean_ood(rows: &[MatrixRow], cell: &CellSpec) -> Option<f64> {
    let label = cell.label();
    let vals: Vec<f64> = rows
        .iter()
        .filter(|r| r.condition == label && r.wd_gate)
        .map(|r| r.ood_final)
        .collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

/// Trains and scores every (cell, seed) in order, appending to
/// `out_root/matrix.csv` as rows complete.
pub fn run_condition_matrix(spec: &MatrixSpec) -> Result<Vec<MatrixRow>, HarnessError> {
    for cell in &spec.cells {
        let dir = cell.dataset_dir(&spec.data_root);
        if !dir.join(MANIFEST_FILE).exists() {
            return Err(HarnessError::MissingDataset(dir));
        }
    }
    fs::create_dir_all(&spec.out_root)?;
    let csv_path = spec.out_root.join(MATRIX_CSV);
    fs::write(&csv_path, format!("{MATRIX_HEADER}\n"))?;
    let mut rows = Vec::new();
    for cell in &spec.cells {
        let dir = cell.dataset_dir(&spec.data_root);
        let data = TrainData::load(&dir, cell.regime)?;
        let wd = load_set(&dir, SetKind::WdTest, Task::HiddenSingle)?;
        let ood = load_set(&dir, SetKind::OodTest, Task::HiddenSingle)?;
        for &seed in &spec.seeds {
            let model_cfg = ModelConfig {
                pe_scheme: cell.pe,
                seed,
                ..spec.model.clone()
            };
            let mut regime = RegimeSpec {
                regime: cell.regime,
                seed,
                ..spec.regime.clone()
            };
            regime.format.ns_padded = cell.padded;
            let run_dir = spec.out_root.join(cell.label()).join(format!("seed{seed}"));
            let outcome = train(&model_cfg, &regime, &data, &run_dir)?;
            let opts = EvalOptions {
                format: regime.format,
                srl_seed: seed,
                ..spec.eval.clone()
            };
            let wd_report = evaluate(&outcome.model, &wd, "wd", &opts)?;
            let ood_report = evaluate(&outcome.model, &ood, "ood", &opts)?;
            fs::write(
                run_dir.join("report_wd.json"),
                serde_json::to_string_pretty(&wd_report)? + "\n",
            )?;
            fs::write(
                run_dir.join("report_ood.json"),
                serde_json::to_string_pretty(&ood_report)? + "\n",
            )?;
            let row = MatrixRow {
                condition: cell.label(),
                seed,
                wd_final: wd_report.final_accuracy,
                wd_full: wd_report.full_accuracy,
                ood_final: ood_report.final_accuracy,
                ood_full: ood_report.full_accuracy,
                wd_gate: wd_report.passes_wd_gate(),
            };
            let mut text = fs::read_to_string(&csv_path)?;
            text.push_str(&row.csv());
            text.push('\n');
            fs::write(&csv_path, text)?;
            rows.push(row);
        }
    }
    Ok(rows)
}
