//! Model weights in the shared tensor container plus a JSON sidecar holding
//! the config and the vocabulary hash.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sudokuformer_core::seqformat::vocab_hash;
use sudokuformer_numerics::checkpoint::{self, NamedTensor};

use crate::config::ModelConfig;
use crate::error::ModelError;
use crate::model::Model;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub config: ModelConfig,
    pub vocab_hash: String,
    pub param_count: usize,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Writes `path` and its sidecar. `extra` tensors (optimizer state, for
/// instance) are stored after the model weights and must not reuse their names.
pub fn save(model: &Model<f32>, path: &Path, extra: &[NamedTensor]) -> Result<(), ModelError> {
    let mut tensors = model.named();
    for (name, t) in extra {
        if model.slot(name).is_some() {
            return Err(ModelError::Checkpoint(format!(
                "extra tensor {name} shadows a weight"
            )));
        }
        tensors.push((name.clone(), t.clone()));
    }
    checkpoint::save(path, &tensors)?;
    let sidecar = Sidecar {
        config: model.config().clone(),
        vocab_hash: vocab_hash(),
        param_count: model.param_count(),
    };
    fs::write(
        sidecar_path(path),
        serde_json::to_string_pretty(&sidecar)? + "\n",
    )?;
    Ok(())
}

pub fn read_sidecar(path: &Path) -> Result<Sidecar, ModelError> {
    let text = fs::read_to_string(sidecar_path(path))?;
    Ok(serde_json::from_str(&text)?)
}

/// Loads a model, returning any extra tensors stored with it.
pub fn load(path: &Path) -> Result<(Model<f32>, Vec<NamedTensor>), ModelError> {
    let sidecar = read_sidecar(path)?;
    if sidecar.vocab_hash != vocab_hash() {
        return Err(ModelError::Checkpoint(format!(
            "vocabulary hash {} does not match this build ({})",
            sidecar.vocab_hash,
            vocab_hash()
        )));
    }
    let layout = sidecar.config.param_layout();
    let (weights, extra): (Vec<NamedTensor>, Vec<NamedTensor>) = checkpoint::load(path)?
        .into_iter()
        .partition(|(name, _)| layout.iter().any(|(n, _)| n == name));
    let model = Model::from_named(sidecar.config, weights)?;
    if model.param_count() != sidecar.param_count {
        return Err(ModelError::Checkpoint(format!(
            "sidecar records {} parameters, weights hold {}",
            sidecar.param_count,
            model.param_count()
        )));
    }
    Ok((model, extra))
}
