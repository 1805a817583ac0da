//! Teacher-forced training with per-task batches summed into one Adam step.
//!
//! Every random choice is derived from `(seed, stream, index)` so a run can
//! resume from any checkpoint and reproduce the uninterrupted log exactly.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sudokuformer_core::datagen::{instance_rng, load_set, SetKind};
use sudokuformer_core::grid::CELLS;
use sudokuformer_core::seqformat::{build_loss_mask, encode, LossMask, TokenId};
use sudokuformer_core::{PuzzleInstance, Task};
use sudokuformer_model::{checkpoint, srl_draw, Batch, Mode, Model, ModelConfig, PeScheme};
use sudokuformer_numerics::checkpoint::NamedTensor;
use sudokuformer_numerics::{adam_step, AdamState, Tape, Tensor};

use crate::error::HarnessError;
use crate::eval::{evaluate, EvalOptions};
use crate::regime::{Regime, RegimeSpec};

const SHUFFLE_STREAM: u64 = 0x7a1;
const SRL_TRAIN_STREAM: u64 = 0x7a2;
const DROPOUT_STREAM: u64 = 0x7a3;

pub const TRAIN_LOG: &str = "train_log.csv";
pub const TIMING_LOG: &str = "train_timing.csv";
pub const EVAL_LOG: &str = "eval_log.csv";
pub const FINAL_CHECKPOINT: &str = "final.sdok";

const TRAIN_HEADER: &str = "update,hs_loss,fh_loss,ns_loss,total_loss";
const TIMING_HEADER: &str = "update,elapsed_seconds";
const EVAL_HEADER: &str = "update,task,count,final_accuracy,full_accuracy";

fn task_index(task: Task) -> u64 {
    match task {
        Task::HiddenSingle => 0,
        Task::FullHouse => 1,
        Task::NakedSingle => 2,
    }
}

/// Training sets for the regime's tasks plus any WD sets used for snapshots.
#[derive(Debug, Clone, Default)]
pub struct TrainData {
    pub train: BTreeMap<Task, Vec<PuzzleInstance>>,
    pub wd: BTreeMap<Task, Vec<PuzzleInstance>>,
}

impl TrainData {
    /// Reads the files a regime needs from a dataset directory. Tasks outside
    /// the regime are never opened.
    pub fn load(dir: &Path, regime: Regime) -> Result<Self, HarnessError> {
        let mut data = TrainData::default();
        for &task in regime.tasks() {
            for (set, map) in [(SetKind::Train, &mut data.train), (SetKind::WdTest, &mut data.wd)] {
                let file = dir.join(sudokuformer_core::datagen::dataset_file_name(set, task));
                if !file.exists() {
                    if set == SetKind::Train {
                        return Err(HarnessError::MissingDataset(file));
                    }
                    continue;
                }
                map.insert(task, load_set(dir, set, task)?);
            }
        }
        Ok(data)
    }
}

/// Per-update record, as written to the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateRecord {
    pub update: u64,
    pub losses: BTreeMap<Task, f64>,
    pub total: f64,
}

impl UpdateRecord {
    fn csv(&self) -> String {
        let cell = |t: Task| self.losses.get(&t).map(|l| format!("{l}")).unwrap_or_default();
        format!(
            "{},{},{},{},{}",
            self.update,
            cell(Task::HiddenSingle),
            cell(Task::FullHouse),
            cell(Task::NakedSingle),
            self.total
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainState {
    pub update: u64,
    pub adam_step: u64,
    pub config: ModelConfig,
    pub spec: RegimeSpec,
}

pub struct TrainOutcome {
    pub model: Model<f32>,
    pub last_update: u64,
    pub resumed_from: Option<u64>,
}

pub fn checkpoint_name(update: u64) -> String {
    format!("ckpt_{update:06}.sdok")
}

fn state_path(ckpt: &Path) -> PathBuf {
    ckpt.with_extension("state.json")
}

/// Latest periodic checkpoint in `dir`, if any.
pub fn latest_checkpoint(dir: &Path) -> Result<Option<(u64, PathBuf)>, HarnessError> {
    if !dir.exists() {
        return Ok(None);
    }
    let mut best = None;
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        let Some(num) = name.strip_prefix("ckpt_").and_then(|n| n.strip_suffix(".sdok")) else {
            continue;
        };
        if let Ok(u) = num.parse::<u64>() {
            if best.as_ref().is_none_or(|(b, _)| u > *b) {
                best = Some((u, path));
            }
        }
    }
    Ok(best)
}

struct Encoded {
    grid: [u8; CELLS],
    ids: Vec<TokenId>,
    mask: LossMask,
}

/// Position `k` of a task's endless stream: epoch `k / n` is a fresh
/// permutation of the training set.
struct Sampler {
    n: usize,
    seed: u64,
    task: Task,
    epoch: Option<(u64, Vec<usize>)>,
}

impl Sampler {
    fn index(&mut self, k: u64) -> usize {
        let epoch = k / self.n as u64;
        if self.epoch.as_ref().map(|e| e.0) != Some(epoch) {
            let mut perm: Vec<usize> = (0..self.n).collect();
            let mut rng = instance_rng(self.seed, SHUFFLE_STREAM + task_index(self.task), epoch);
            perm.shuffle(&mut rng);
            self.epoch = Some((epoch, perm));
        }
        self.epoch.as_ref().expect("just set").1[(k % self.n as u64) as usize]
    }
}

fn truncate_log(path: &Path, header: &str, last_update: u64) -> Result<(), HarnessError> {
    let mut kept = vec![header.to_string()];
    if path.exists() {
        for line in BufReader::new(File::open(path)?).lines().skip(1) {
            let line = line?;
            let update: Option<u64> = line.split(',').next().and_then(|u| u.parse().ok());
            if update.is_some_and(|u| u <= last_update) {
                kept.push(line);
            }
        }
    }
    fs::write(path, kept.join("\n") + "\n")?;
    Ok(())
}

fn appender(path: &Path) -> Result<BufWriter<File>, HarnessError> {
    Ok(BufWriter::new(OpenOptions::new().append(true).open(path)?))
}

fn adam_tensors(model: &Model<f32>, state: &AdamState<f32>) -> Vec<NamedTensor> {
    let mut out = Vec::with_capacity(2 * model.names().len());
    for (i, name) in model.names().iter().enumerate() {
        out.push((format!("adam.m.{name}"), state.m[i].clone()));
        out.push((format!("adam.v.{name}"), state.v[i].clone()));
    }
    out
}

fn save_checkpoint(
    dir: &Path,
    update: u64,
    model: &Model<f32>,
    adam: &AdamState<f32>,
    spec: &RegimeSpec,
) -> Result<(), HarnessError> {
    let path = dir.join(checkpoint_name(update));
    checkpoint::save(model, &path, &adam_tensors(model, adam))?;
    let state = TrainState {
        update,
        adam_step: adam.step,
        config: model.config().clone(),
        spec: spec.clone(),
    };
    fs::write(state_path(&path), serde_json::to_string_pretty(&state)? + "\n")?;
    Ok(())
}

fn resume(
    path: &Path,
    config: &ModelConfig,
    spec: &RegimeSpec,
) -> Result<(Model<f32>, AdamState<f32>, u64), HarnessError> {
    let state: TrainState = serde_json::from_str(&fs::read_to_string(state_path(path))?)?;
    if &state.config != config || &state.spec != spec {
        return Err(HarnessError::Config(format!(
            "{} was written with a different model or regime config",
            path.display()
        )));
    }
    let (model, extra) = checkpoint::load(path)?;
    let mut by_name: BTreeMap<String, Tensor<f32>> = extra.into_iter().collect();
    let mut adam = AdamState::new(spec.adam(), model.params());
    for (i, name) in model.names().iter().enumerate() {
        for (prefix, slot) in [("m", &mut adam.m[i]), ("v", &mut adam.v[i])] {
            let key = format!("adam.{prefix}.{name}");
            *slot = by_name
                .remove(&key)
                .ok_or_else(|| HarnessError::Config(format!("checkpoint lacks {key}")))?;
        }
    }
    adam.step = state.adam_step;
    Ok((model, adam, state.update))
}

pub fn train(
    config: &ModelConfig,
    spec: &RegimeSpec,
    data: &TrainData,
    out_dir: &Path,
) -> Result<TrainOutcome, HarnessError> {
    train_with(config, spec, data, out_dir, &mut |_| {})
}

/// As [`train`], calling `progress` after every update.
pub fn train_with(
    config: &ModelConfig,
    spec: &RegimeSpec,
    data: &TrainData,
    out_dir: &Path,
    progress: &mut dyn FnMut(&UpdateRecord),
) -> Result<TrainOutcome, HarnessError> {
    spec.validate()?;
    config.validate()?;
    for &task in spec.regime.tasks() {
        if data.train.get(&task).is_none_or(Vec::is_empty) {
            return Err(HarnessError::Config(format!(
                "regime {} needs a {} training set",
                spec.regime.as_str(),
                task.as_str()
            )));
        }
    }
    fs::create_dir_all(out_dir)?;

    let (mut model, mut adam, start) = match latest_checkpoint(out_dir)? {
        Some((_, path)) => {
            let (m, a, u) = resume(&path, config, spec)?;
            (m, a, u)
        }
        None => {
            let m = Model::<f32>::new(config.clone())?;
            let a = AdamState::new(spec.adam(), m.params());
            (m, a, 0)
        }
    };
    let resumed_from = (start > 0).then_some(start);
    truncate_log(&out_dir.join(TRAIN_LOG), TRAIN_HEADER, start)?;
    truncate_log(&out_dir.join(TIMING_LOG), TIMING_HEADER, start)?;
    truncate_log(&out_dir.join(EVAL_LOG), EVAL_HEADER, start)?;
    let mut train_log = appender(&out_dir.join(TRAIN_LOG))?;
    let mut timing_log = appender(&out_dir.join(TIMING_LOG))?;
    let mut eval_log = appender(&out_dir.join(EVAL_LOG))?;

    let mut encoded: BTreeMap<Task, Vec<Encoded>> = BTreeMap::new();
    let mut samplers: BTreeMap<Task, Sampler> = BTreeMap::new();
    for &task in spec.regime.tasks() {
        let set = &data.train[&task];
        let enc = set
            .iter()
            .map(|inst| {
                let seq = encode(inst, &spec.format)?;
                let mask = build_loss_mask(task, &seq, spec.format.mask_start)?;
                Ok(Encoded {
                    grid: *inst.grid.values(),
                    ids: seq.ids,
                    mask,
                })
            })
            .collect::<Result<Vec<_>, HarnessError>>()?;
        encoded.insert(task, enc);
        samplers.insert(
            task,
            Sampler {
                n: set.len(),
                seed: spec.seed,
                task,
                epoch: None,
            },
        );
    }

    let clock = Instant::now();
    for update in start + 1..=spec.total_updates {
        let mut grads: Vec<Tensor<f32>> =
            model.params().iter().map(|p| Tensor::zeros(p.shape())).collect();
        let mut losses = BTreeMap::new();
        for &task in spec.active_tasks(update) {
            let k0 = spec.active_count(task, update - 1) * spec.batch_per_task as u64;
            let sampler = samplers.get_mut(&task).expect("regime task");
            let picks: Vec<usize> = (0..spec.batch_per_task as u64)
                .map(|j| sampler.index(k0 + j))
                .collect();
            let stream_index = update * 4 + task_index(task);
            let loss = task_step(
                &model,
                spec,
                &encoded[&task],
                &picks,
                stream_index,
                &mut grads,
            )?;
            if !loss.is_finite() {
                train_log.flush()?;
                return Err(HarnessError::Divergence {
                    update,
                    task: task.as_str().to_string(),
                    loss,
                });
            }
            losses.insert(task, loss);
        }
        if grads.iter().any(|g| !g.is_finite()) {
            train_log.flush()?;
            return Err(HarnessError::Divergence {
                update,
                task: "gradient".to_string(),
                loss: f64::NAN,
            });
        }
        adam_step(model.params_mut(), &grads, &mut adam)?;
        if model.params().iter().any(|p| !p.is_finite()) {
            train_log.flush()?;
            return Err(HarnessError::Divergence {
                update,
                task: "parameter".to_string(),
                loss: f64::NAN,
            });
        }
        let record = UpdateRecord {
            update,
            total: losses.values().sum(),
            losses,
        };
        writeln!(train_log, "{}", record.csv())?;
        writeln!(timing_log, "{update},{:.3}", clock.elapsed().as_secs_f64())?;
        progress(&record);

        if spec.eval_every > 0 && update % spec.eval_every == 0 {
            let opts = EvalOptions {
                format: spec.format,
                srl_seed: spec.seed,
                chunk: spec.micro_batch,
            };
            for (task, set) in &data.wd {
                let subset = &set[..spec.eval_size.min(set.len())];
                if subset.is_empty() {
                    continue;
                }
                let r = evaluate(&model, subset, "wd", &opts)?;
                writeln!(
                    eval_log,
                    "{update},{},{},{},{}",
                    task.short(),
                    r.count,
                    r.final_accuracy,
                    r.full_accuracy
                )?;
            }
            eval_log.flush()?;
        }
        let at_cadence = spec.checkpoint_every > 0 && update % spec.checkpoint_every == 0;
        if at_cadence || update == spec.total_updates {
            train_log.flush()?;
            timing_log.flush()?;
            save_checkpoint(out_dir, update, &model, &adam, spec)?;
        }
    }
    train_log.flush()?;
    timing_log.flush()?;
    checkpoint::save(&model, &out_dir.join(FINAL_CHECKPOINT), &[])?;
    Ok(TrainOutcome {
        model,
        last_update: spec.total_updates,
        resumed_from,
    })
}

/// Forward and backward over one task batch in micro-batches, adding the
/// gradient of the batch-mean loss into `grads`. Returns the loss value.
fn task_step(
    model: &Model<f32>,
    spec: &RegimeSpec,
    encoded: &[Encoded],
    picks: &[usize],
    stream_index: u64,
    grads: &mut [Tensor<f32>],
) -> Result<f64, HarnessError> {
    let mut by_len: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &i in picks {
        by_len.entry(encoded[i].ids.len()).or_default().push(i);
    }
    let total_positions: usize = picks.iter().map(|&i| encoded[i].mask.count()).sum();
    if total_positions == 0 {
        return Err(HarnessError::Config("batch has no supervised positions".into()));
    }
    let mut srl_rng = instance_rng(spec.seed, SRL_TRAIN_STREAM, stream_index);
    let mut dropout_rng = instance_rng(spec.seed, DROPOUT_STREAM, stream_index);
    let mut loss_value = 0.0;
    for group in by_len.values() {
        for part in group.chunks(spec.micro_batch) {
            let srl = if model.config().pe_scheme == PeScheme::Srl {
                Some(
                    part.iter()
                        .map(|_| srl_draw(&mut srl_rng, model.config()))
                        .collect::<Result<Vec<_>, _>>()?,
                )
            } else {
                None
            };
            let batch = Batch {
                grids: part.iter().map(|&i| encoded[i].grid).collect(),
                texts: part.iter().map(|&i| encoded[i].ids.clone()).collect(),
                srl,
                cell_order: None,
            };
            let masks: Vec<LossMask> = part.iter().map(|&i| encoded[i].mask.clone()).collect();
            let positions: usize = masks.iter().map(LossMask::count).sum();
            if positions == 0 {
                continue;
            }
            let weight = positions as f32 / total_positions as f32;
            let mut tape = Tape::new();
            let (loss, _) = model.loss(&mut tape, &batch, &masks, Mode::Train(&mut dropout_rng))?;
            let weighted = tape.scale(loss, weight)?;
            loss_value += tape.value(weighted).item() as f64;
            tape.backward(weighted)?.accumulate_into(grads)?;
        }
    }
    Ok(loss_value)
}
