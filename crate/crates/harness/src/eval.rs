use serde::{Deserialize, Serialize};
use sudokuformer_core::datagen::instance_rng;
use sudokuformer_core::grid::CellRef;
use sudokuformer_core::oracle::TRACE_STEPS;
use sudokuformer_core::seqformat::{
    answer, encode_prompt, encode_target, number_value, tok, FormatOptions, TargetMode, TokenId,
    LINE_LEN,
};
use sudokuformer_core::{PuzzleInstance, Task};
use sudokuformer_model::{generate_greedy, srl_draw, GenRequest, Model, PeScheme};

use crate::error::HarnessError;

/// Seed stream for evaluation-time SRL labels.
pub const SRL_EVAL_STREAM: u64 = 0x5e1;

/// WD final-answer accuracy a model needs to count in OOD aggregates.
pub const WD_GATE: f64 = 0.99;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorTaxonomy {
    /// Step line at the right cell with the wrong answer, cell empty.
    pub wrong_step_empty: u64,
    /// Same, cell filled.
    pub wrong_step_filled: u64,
    /// Step line missing, malformed, or naming a different cell than expected.
    pub iteration_error: u64,
    /// Final answer contradicts the generation's own step answers.
    pub inconsistent_final: u64,
    /// No `<EOS>` within the generation cap.
    pub overflow: u64,
}

impl ErrorTaxonomy {
    fn add(&mut self, o: &ErrorTaxonomy) {
        self.wrong_step_empty += o.wrong_step_empty;
        self.wrong_step_filled += o.wrong_step_filled;
        self.iteration_error += o.iteration_error;
        self.inconsistent_final += o.inconsistent_final;
        self.overflow += o.overflow;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Score {
    pub final_correct: bool,
    pub full_correct: bool,
    pub errors: ErrorTaxonomy,
    /// Whether the final answer follows from the generated steps; `None`
    /// when there is nothing to compare.
    pub self_consistent: Option<bool>,
}

fn parse_line(line: &[TokenId]) -> Option<(CellRef, TokenId)> {
    if line.len() != LINE_LEN || line[0] != tok::ROW || line[2] != tok::COLUMN {
        return None;
    }
    let cell = CellRef::new(number_value(line[1])?, number_value(line[3])?).ok()?;
    Some((cell, line[4]))
}

fn read_answer(t: TokenId) -> Option<bool> {
    match t {
        tok::YES => Some(true),
        tok::NO => Some(false),
        _ => None,
    }
}

/// Scores one generation (the tokens after the prompt) against the instance.
pub fn score(
    inst: &PuzzleInstance,
    generated: &[TokenId],
    overflow: bool,
    mode: TargetMode,
) -> Result<Score, HarnessError> {
    let target = encode_target(inst, mode)?;
    let mut s = Score {
        full_correct: !overflow && generated == target.as_slice(),
        ..Score::default()
    };
    if overflow {
        s.errors.overflow = 1;
    }
    let wrong_step = |errors: &mut ErrorTaxonomy, cell: CellRef| {
        if inst.grid.is_empty_at(cell) {
            errors.wrong_step_empty += 1;
        } else {
            errors.wrong_step_filled += 1;
        }
    };
    match inst.task {
        Task::HiddenSingle | Task::FullHouse => {
            let label = inst.final_label().expect("HS/FH instances carry a label");
            let final_answer = generated
                .iter()
                .rposition(|&t| t == tok::SOLUTION)
                .and_then(|i| generated.get(i + 1))
                .and_then(|&t| read_answer(t));
            s.final_correct = final_answer == Some(label);
            if mode == TargetMode::FinalOnly {
                return Ok(s);
            }
            let mut answers = Vec::with_capacity(TRACE_STEPS);
            for (k, expected) in inst.steps.iter().enumerate() {
                let line = generated.get(k * LINE_LEN..(k + 1) * LINE_LEN).and_then(parse_line);
                let Some((cell, ans)) = line else {
                    s.errors.iteration_error += 1;
                    break;
                };
                if cell != expected.cell {
                    s.errors.iteration_error += 1;
                } else if ans != answer(expected.answer) {
                    wrong_step(&mut s.errors, cell);
                }
                answers.push(read_answer(ans));
            }
            if let (Some(fin), true) = (final_answer, answers.len() == TRACE_STEPS) {
                let steps: Option<Vec<bool>> = answers.into_iter().collect();
                if let Some(steps) = steps {
                    let consistent = match inst.task {
                        Task::HiddenSingle => fin == steps.iter().all(|&a| !a),
                        // All five filled leaves the answer to the digit check.
                        _ => steps.iter().all(|&a| a) || !fin,
                    };
                    s.self_consistent = Some(consistent);
                    if !consistent {
                        s.errors.inconsistent_final = 1;
                    }
                }
            }
        }
        Task::NakedSingle => {
            let mut all_right = true;
            for (q, expected) in inst.steps.iter().enumerate() {
                let got = generated.get(q * LINE_LEN + 4).copied();
                if got != Some(answer(expected.answer)) {
                    all_right = false;
                    wrong_step(&mut s.errors, expected.cell);
                }
            }
            s.final_correct = all_right && generated.len() == target.len();
        }
    }
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub task: Task,
    pub count: u64,
    pub final_correct: u64,
    pub full_correct: u64,
    pub final_accuracy: f64,
    pub full_accuracy: f64,
    pub errors: ErrorTaxonomy,
    pub consistency_checked: u64,
    pub consistent: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: String,
    pub mode: TargetMode,
    pub count: u64,
    pub final_accuracy: f64,
    pub full_accuracy: f64,
    pub per_task: Vec<TaskReport>,
    pub errors: ErrorTaxonomy,
    /// Share of checkable generations whose final answer follows from their steps.
    pub consistency_fraction: Option<f64>,
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

impl EvalReport {
    pub fn from_scores(
        split: &str,
        mode: TargetMode,
        instances: &[PuzzleInstance],
        scores: &[Score],
    ) -> Self {
        let mut per_task = Vec::new();
        for task in Task::ALL {
            let mut r = TaskReport {
                task,
                count: 0,
                final_correct: 0,
                full_correct: 0,
                final_accuracy: 0.0,
                full_accuracy: 0.0,
                errors: ErrorTaxonomy::default(),
                consistency_checked: 0,
                consistent: 0,
            };
            for (inst, s) in instances.iter().zip(scores) {
                if inst.task != task {
                    continue;
                }
                r.count += 1;
                r.final_correct += u64::from(s.final_correct);
                r.full_correct += u64::from(s.full_correct);
                r.errors.add(&s.errors);
                if let Some(c) = s.self_consistent {
                    r.consistency_checked += 1;
                    r.consistent += u64::from(c);
                }
            }
            if r.count > 0 {
                r.final_accuracy = ratio(r.final_correct, r.count);
                r.full_accuracy = ratio(r.full_correct, r.count);
                per_task.push(r);
            }
        }
        let count = scores.len() as u64;
        let mut errors = ErrorTaxonomy::default();
        per_task.iter().for_each(|t| errors.add(&t.errors));
        let checked: u64 = per_task.iter().map(|t| t.consistency_checked).sum();
        let consistent: u64 = per_task.iter().map(|t| t.consistent).sum();
        Self {
            split: split.to_string(),
            mode,
            count,
            final_accuracy: ratio(per_task.iter().map(|t| t.final_correct).sum(), count),
            full_accuracy: ratio(per_task.iter().map(|t| t.full_correct).sum(), count),
            per_task,
            errors,
            consistency_fraction: (checked > 0).then(|| ratio(consistent, checked)),
        }
    }

    pub fn passes_wd_gate(&self) -> bool {
        self.final_accuracy >= WD_GATE
    }

    pub const CSV_HEADER: &'static str = "split,task,count,final_accuracy,full_accuracy,\
wrong_step_empty,wrong_step_filled,iteration_error,inconsistent_final,overflow";

    /// One CSV row per task plus an `all` row.
    pub fn csv_rows(&self) -> Vec<String> {
        let row = |task: &str, count: u64, fa: f64, sa: f64, e: &ErrorTaxonomy| {
            format!(
                "{},{task},{count},{fa:.6},{sa:.6},{},{},{},{},{}",
                self.split,
                e.wrong_step_empty,
                e.wrong_step_filled,
                e.iteration_error,
                e.inconsistent_final,
                e.overflow
            )
        };
        let mut rows: Vec<String> = self
            .per_task
            .iter()
            .map(|t| row(t.task.short(), t.count, t.final_accuracy, t.full_accuracy, &t.errors))
            .collect();
        rows.push(row("all", self.count, self.final_accuracy, self.full_accuracy, &self.errors));
        rows
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalOptions {
    pub format: FormatOptions,
    /// Seeds the per-instance SRL labels.
    pub srl_seed: u64,
    /// Sequences per forward pass.
    pub chunk: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            format: FormatOptions::default(),
            srl_seed: 0,
            chunk: 64,
        }
    }
}

/// Generation requests for `instances`; SRL labels come from `srl_seed` and
/// the instance index.
pub fn gen_requests(
    model: &Model<f32>,
    instances: &[PuzzleInstance],
    opts: &EvalOptions,
) -> Result<Vec<GenRequest>, HarnessError> {
    instances
        .iter()
        .enumerate()
        .map(|(i, inst)| {
            let srl = if model.config().pe_scheme == PeScheme::Srl {
                let mut rng = instance_rng(opts.srl_seed, SRL_EVAL_STREAM, i as u64);
                Some(srl_draw(&mut rng, model.config())?)
            } else {
                None
            };
            Ok(GenRequest {
                grid: *inst.grid.values(),
                prompt: encode_prompt(inst, opts.format.ns_padded)?.ids,
                ns_queries: (inst.task == Task::NakedSingle).then(|| inst.queries.clone()),
                srl,
            })
        })
        .collect()
}

/// Greedy generation and scoring of every instance.
pub fn evaluate_scores(
    model: &Model<f32>,
    instances: &[PuzzleInstance],
    opts: &EvalOptions,
) -> Result<Vec<Score>, HarnessError> {
    let requests = gen_requests(model, instances, opts)?;
    let gens = generate_greedy(model, &requests, opts.chunk)?;
    instances
        .iter()
        .zip(&gens)
        .map(|(inst, g)| score(inst, &g.tokens, g.overflow, opts.format.target))
        .collect()
}

pub fn evaluate(
    model: &Model<f32>,
    instances: &[PuzzleInstance],
    split: &str,
    opts: &EvalOptions,
) -> Result<EvalReport, HarnessError> {
    let scores = evaluate_scores(model, instances, opts)?;
    Ok(EvalReport::from_scores(split, opts.format.target, instances, &scores))
}
