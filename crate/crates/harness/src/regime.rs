use serde::{Deserialize, Serialize};
use sudokuformer_core::seqformat::FormatOptions;
use sudokuformer_core::Task;
use sudokuformer_numerics::AdamConfig;

use crate::error::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    #[default]
    HsOnly,
    Simultaneous,
    Curriculum,
}

impl Regime {
    pub const ALL: [Regime; 3] = [Regime::HsOnly, Regime::Simultaneous, Regime::Curriculum];

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::HsOnly => "hs_only",
            Regime::Simultaneous => "simultaneous",
            Regime::Curriculum => "curriculum",
        }
    }

    /// Tasks whose training sets the regime reads.
    pub fn tasks(self) -> &'static [Task] {
        match self {
            Regime::HsOnly => &[Task::HiddenSingle],
            _ => &Task::ALL,
        }
    }
}

impl std::str::FromStr for Regime {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Regime::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| format!("unknown regime `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegimeSpec {
    pub regime: Regime,
    pub total_updates: u64,
    /// Curriculum only: updates `1..=curriculum_phase1` train FH and NS.
    pub curriculum_phase1: u64,
    pub batch_per_task: usize,
    /// Sequences per forward pass; gradients of the pieces are summed.
    pub micro_batch: usize,
    /// 0 disables WD snapshots.
    pub eval_every: u64,
    /// Instances per task in each WD snapshot.
    pub eval_size: usize,
    /// 0 disables periodic checkpoints.
    pub checkpoint_every: u64,
    pub seed: u64,
    /// Adam step size; the moment decay rates and epsilon keep their defaults.
    pub lr: f64,
    pub format: FormatOptions,
}

impl Default for RegimeSpec {
    fn default() -> Self {
        Self {
            regime: Regime::HsOnly,
            total_updates: 70_000,
            curriculum_phase1: 20_000,
            batch_per_task: 192,
            micro_batch: 64,
            eval_every: 5_000,
            eval_size: 500,
            checkpoint_every: 5_000,
            seed: 0,
            lr: 1e-4,
            format: FormatOptions::default(),
        }
    }
}

impl RegimeSpec {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let err = |m: &str| Err(HarnessError::Config(m.to_string()));
        if self.total_updates == 0 || self.batch_per_task == 0 || self.micro_batch == 0 {
            return err("updates, batch size and micro-batch must be positive");
        }
        if self.regime == Regime::Curriculum && self.curriculum_phase1 >= self.total_updates {
            return err("curriculum phase 1 must end before the last update");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return err("learning rate must be positive");
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            ..AdamConfig::default()
        }
    }

    /// Tasks trained at 1-based `update`.
    pub fn active_tasks(&self, update: u64) -> &'static [Task] {
        match self.regime {
            Regime::HsOnly => &[Task::HiddenSingle],
            Regime::Simultaneous => &Task::ALL,
            Regime::Curriculum if update <= self.curriculum_phase1 => {
                &[Task::FullHouse, Task::NakedSingle]
            }
            Regime::Curriculum => &Task::ALL,
        }
    }

    /// Updates in `1..=update` that trained `task`.
    pub fn active_count(&self, task: Task, update: u64) -> u64 {
        match self.regime {
            Regime::HsOnly => u64::from(task == Task::HiddenSingle) * update,
            Regime::Simultaneous => update,
            Regime::Curriculum if task == Task::HiddenSingle => {
                update.saturating_sub(self.curriculum_phase1)
            }
            Regime::Curriculum => update,
        }
    }
}
