//! Last-layer attention from one step line onto the grid, under digit rotation.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sudokuformer_core::datagen::instance_rng;
use sudokuformer_core::grid::{CellRef, CELLS, SIZE};
use sudokuformer_core::oracle::TRACE_STEPS;
use sudokuformer_core::seqformat::{encode, FormatOptions, TargetMode, LINE_LEN};
use sudokuformer_core::{rotate_digits, PuzzleInstance, Task};
use sudokuformer_model::{srl_draw, Batch, Mode, Model, PeScheme, GRID_SLOTS};
use sudokuformer_numerics::Tape;

use crate::error::HarnessError;
use crate::eval::SRL_EVAL_STREAM;

/// Heatmap cells are drawn as `PPM_SCALE` pixel squares.
pub const PPM_SCALE: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeMap {
    pub shift: u8,
    /// Candidate digit after rotation.
    pub digit: u8,
    /// Row-major, one value per grid cell.
    pub values: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionProbeResult {
    pub step_index: usize,
    pub step_cell: [u8; 2],
    /// Text index of the queried column-number token.
    pub query_position: usize,
    pub maps: Vec<ProbeMap>,
}

/// Text index of the column number on step line `step_index` (1-based).
pub fn step_query_position(inst: &PuzzleInstance, step_index: usize) -> Result<usize, HarnessError> {
    if !(1..=TRACE_STEPS).contains(&step_index) {
        return Err(HarnessError::Probe(format!(
            "step index {step_index} outside 1..={TRACE_STEPS}"
        )));
    }
    let seq = encode(inst, &FormatOptions::default())?;
    Ok(seq.boundary + (step_index - 1) * LINE_LEN + 3)
}

/// Per-key maximum over heads of the last layer's attention from the step's
/// column-number position onto the 36 grid slots.
pub fn attention_map(
    model: &Model<f32>,
    inst: &PuzzleInstance,
    step_index: usize,
    srl_seed: u64,
) -> Result<Vec<f32>, HarnessError> {
    if inst.task != Task::HiddenSingle {
        return Err(HarnessError::Probe(format!(
            "probe needs a hidden single instance, got {}",
            inst.task.as_str()
        )));
    }
    inst.verify()?;
    let query = step_query_position(inst, step_index)?;
    let seq = encode(
        inst,
        &FormatOptions {
            target: TargetMode::FullSequence,
            ..FormatOptions::default()
        },
    )?;
    let srl = (model.config().pe_scheme == PeScheme::Srl)
        .then(|| srl_draw(&mut instance_rng(srl_seed, SRL_EVAL_STREAM, 0), model.config()))
        .transpose()?
        .map(|labels| vec![labels]);
    let batch = Batch {
        grids: vec![*inst.grid.values()],
        texts: vec![seq.ids],
        srl,
        cell_order: None,
    };
    let mut tape = Tape::new();
    let out = model.forward(&mut tape, &batch, Mode::Eval)?;
    let last = *out.attention.last().expect("at least one layer");
    let (probs, _, heads) = tape.attention_probs(last).expect("attention node");
    let s = GRID_SLOTS + out.text_len;
    let q = GRID_SLOTS + query;
    Ok((0..CELLS)
        .map(|k| {
            (0..heads)
                .map(|h| probs[(h * s + q) * s + k])
                .fold(0.0f32, f32::max)
        })
        .collect())
}

/// Maps for digit shifts 0 through 5 of the same puzzle.
pub fn probe_attention(
    model: &Model<f32>,
    inst: &PuzzleInstance,
    step_index: usize,
    srl_seed: u64,
) -> Result<AttentionProbeResult, HarnessError> {
    let query_position = step_query_position(inst, step_index)?;
    let cell: CellRef = inst
        .steps
        .get(step_index - 1)
        .ok_or_else(|| HarnessError::Probe("instance has no step lines".into()))?
        .cell;
    let mut maps = Vec::with_capacity(SIZE);
    for shift in 0..SIZE as u8 {
        let rotated = rotate_digits(inst, shift)?;
        maps.push(ProbeMap {
            shift,
            digit: rotated.digit,
            values: attention_map(model, &rotated, step_index, srl_seed)?,
        });
    }
    Ok(AttentionProbeResult {
        step_index,
        step_cell: [cell.row(), cell.col()],
        query_position,
        maps,
    })
}

/// Binary PGM (P5) bytes of one map, brightest cell at 255.
pub fn heatmap_pgm(values: &[f32]) -> Vec<u8> {
    let side = SIZE * PPM_SCALE;
    let max = values.iter().copied().fold(0.0f32, f32::max);
    let mut out = format!("P5\n{side} {side}\n255\n").into_bytes();
    for y in 0..side {
        for x in 0..side {
            let v = values[(y / PPM_SCALE) * SIZE + x / PPM_SCALE];
            let level = if max > 0.0 { (v / max * 255.0).round() } else { 0.0 };
            out.push(level.clamp(0.0, 255.0) as u8);
        }
    }
    out
}

/// Writes `probe.json` and one `probe_shift{k}.pgm` per map into `dir`.
pub fn write_probe(result: &AttentionProbeResult, dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("probe.json"), serde_json::to_string_pretty(result)? + "\n")?;
    for m in &result.maps {
        fs::write(dir.join(format!("probe_shift{}.pgm", m.shift)), heatmap_pgm(&m.values))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heatmap_layout() {
        let mut values = vec![0.0f32; 36];
        values[7] = 0.5;
        values[35] = 0.25;
        let img = heatmap_pgm(&values);
        let header = b"P5\n192 192\n255\n";
        assert_eq!(&img[..header.len()], header);
        let px = &img[header.len()..];
        assert_eq!(px.len(), 192 * 192);
        // Cell (2,2) is index 7: pixel rows 32..64, columns 32..64.
        assert_eq!(px[40 * 192 + 40], 255);
        assert_eq!(px[191 * 192 + 191], 128);
        assert_eq!(px[0], 0);
    }
}
