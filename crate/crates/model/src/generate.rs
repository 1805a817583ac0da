use std::collections::BTreeMap;

use sudokuformer_core::grid::{CellRef, CELLS};
use sudokuformer_core::seqformat::{number, tok, TokenId};
use sudokuformer_numerics::{Scalar, Tape};

use crate::error::ModelError;
use crate::model::{Batch, Mode, Model};

/// Generated tokens allowed per sequence before giving up.
pub const GENERATION_CAP: usize = 64;

#[derive(Debug, Clone)]
pub struct GenRequest {
    pub grid: [u8; CELLS],
    pub prompt: Vec<TokenId>,
    /// Naked Single queries. When present the query coordinates and the
    /// closing `<EOS>` are supplied and the model only fills answer slots.
    pub ns_queries: Option<Vec<CellRef>>,
    pub srl: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Generation {
    /// Everything after the prompt.
    pub tokens: Vec<TokenId>,
    /// The cap was reached without `<EOS>`.
    pub overflow: bool,
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Greedy continuation for each request. Requests sharing a prompt length
/// and query count run in lockstep, `chunk` sequences per forward pass.
pub fn generate_greedy<T: Scalar>(
    model: &Model<T>,
    requests: &[GenRequest],
    chunk: usize,
) -> Result<Vec<Generation>, ModelError> {
    let mut groups: BTreeMap<(usize, Option<usize>), Vec<usize>> = BTreeMap::new();
    for (i, r) in requests.iter().enumerate() {
        if r.prompt.is_empty() {
            return Err(ModelError::Input("empty prompt".into()));
        }
        groups
            .entry((r.prompt.len(), r.ns_queries.as_ref().map(Vec::len)))
            .or_default()
            .push(i);
    }
    let mut out: Vec<Option<Generation>> = vec![None; requests.len()];
    for ((_, queries), members) in groups {
        for part in members.chunks(chunk.max(1)) {
            let reqs: Vec<&GenRequest> = part.iter().map(|&i| &requests[i]).collect();
            let gens = match queries {
                Some(_) => interleaved(model, &reqs)?,
                None => free_running(model, &reqs)?,
            };
            for (&i, g) in part.iter().zip(gens) {
                out[i] = Some(g);
            }
        }
    }
    Ok(out
        .into_iter()
        .map(|g| g.expect("every request grouped"))
        .collect())
}

/// Next-token argmax at the last position of every sequence.
fn next_tokens<T: Scalar>(
    model: &Model<T>,
    reqs: &[&GenRequest],
    seqs: &[Vec<TokenId>],
) -> Result<Vec<TokenId>, ModelError> {
    let batch = Batch {
        grids: reqs.iter().map(|r| r.grid).collect(),
        texts: seqs.to_vec(),
        srl: reqs.iter().map(|r| r.srl.clone()).collect(),
        cell_order: None,
    };
    let mut tape = Tape::new();
    let out = model.forward(&mut tape, &batch, Mode::Eval)?;
    let logits = tape.value(out.logits);
    let v = logits.last_dim();
    let l = out.text_len;
    Ok((0..seqs.len())
        .map(|i| {
            let row = i * l + l - 1;
            argmax(&logits.data()[row * v..(row + 1) * v]) as TokenId
        })
        .collect())
}

fn free_running<T: Scalar>(
    model: &Model<T>,
    reqs: &[&GenRequest],
) -> Result<Vec<Generation>, ModelError> {
    let max_len = model.config().max_text_len;
    let mut seqs: Vec<Vec<TokenId>> = reqs.iter().map(|r| r.prompt.clone()).collect();
    let mut gens: Vec<Generation> = reqs
        .iter()
        .map(|_| Generation {
            tokens: Vec::new(),
            overflow: false,
        })
        .collect();
    let mut active: Vec<usize> = (0..reqs.len()).collect();
    while !active.is_empty() {
        let sub_reqs: Vec<&GenRequest> = active.iter().map(|&i| reqs[i]).collect();
        let sub_seqs: Vec<Vec<TokenId>> = active.iter().map(|&i| seqs[i].clone()).collect();
        let next = next_tokens(model, &sub_reqs, &sub_seqs)?;
        let mut still = Vec::with_capacity(active.len());
        for (&i, t) in active.iter().zip(next) {
            seqs[i].push(t);
            gens[i].tokens.push(t);
            if t == tok::EOS {
                continue;
            }
            if gens[i].tokens.len() >= GENERATION_CAP || seqs[i].len() >= max_len {
                gens[i].overflow = true;
                continue;
            }
            still.push(i);
        }
        active = still;
    }
    Ok(gens)
}

fn interleaved<T: Scalar>(
    model: &Model<T>,
    reqs: &[&GenRequest],
) -> Result<Vec<Generation>, ModelError> {
    let n_queries = reqs[0].ns_queries.as_ref().map_or(0, Vec::len);
    let mut seqs: Vec<Vec<TokenId>> = reqs.iter().map(|r| r.prompt.clone()).collect();
    for q in 0..n_queries {
        for (seq, r) in seqs.iter_mut().zip(reqs) {
            let cell = r.ns_queries.as_ref().expect("grouped by query count")[q];
            seq.extend([
                tok::ROW,
                number(cell.row()),
                tok::COLUMN,
                number(cell.col()),
            ]);
        }
        let next = next_tokens(model, reqs, &seqs)?;
        for (seq, t) in seqs.iter_mut().zip(next) {
            seq.push(t);
        }
    }
    Ok(seqs
        .into_iter()
        .zip(reqs)
        .map(|(mut seq, r)| {
            seq.push(tok::EOS);
            Generation {
                tokens: seq.split_off(r.prompt.len()),
                overflow: false,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        assert_eq!(argmax(&[1.0f32, 3.0, 3.0, 2.0]), 1);
        assert_eq!(argmax(&[0.5f64, 0.5]), 0);
        assert_eq!(argmax(&[-1.0f32]), 0);
    }
}
