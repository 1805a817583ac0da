use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sudokuformer_core::grid::{CELLS, SIZE};
use sudokuformer_core::seqformat::{LossMask, TokenId};
use sudokuformer_numerics::{Scalar, Tape, Tensor, Var};

use crate::config::{Activation, ModelConfig, NormPlacement, PeScheme};
use crate::error::ModelError;
use crate::positional::{attention_bias, sinusoidal_pe, GRID_SLOTS};

const LN_EPS: f64 = 1e-5;

/// Equal-length text sequences paired with their grids.
#[derive(Debug, Clone, Default)]
pub struct Batch {
    pub grids: Vec<[u8; CELLS]>,
    pub texts: Vec<Vec<TokenId>>,
    /// Per-sequence SRL labels, at least as long as the text. Required when
    /// the model uses SRL, ignored otherwise.
    pub srl: Option<Vec<Vec<usize>>>,
    /// Slot `j` of the grid block holds cell `cell_order[j]`; row-major when absent.
    pub cell_order: Option<Vec<usize>>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.grids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grids.is_empty()
    }

    pub fn text_len(&self) -> usize {
        self.texts.first().map_or(0, Vec::len)
    }
}

pub enum Mode<'a> {
    /// Parameters enter the tape as constants and dropout is off.
    Eval,
    /// Parameters are differentiable; dropout draws from the given stream.
    Train(&'a mut ChaCha8Rng),
}

pub struct ForwardOutput {
    /// `[batch * text_len, vocab]`; row `i * text_len + j` predicts token `j + 1`.
    pub logits: Var,
    /// One attention node per layer; see `Tape::attention_probs`.
    pub attention: Vec<Var>,
    pub batch: usize,
    pub text_len: usize,
}

#[derive(Debug, Clone)]
pub struct Model<T: Scalar> {
    config: ModelConfig,
    names: Vec<String>,
    params: Vec<Tensor<T>>,
    slots: HashMap<String, usize>,
}

fn init_tensor<T: Scalar>(name: &str, shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<T> {
    if name.starts_with("embed.") {
        let scale = 1.0 / (shape[1] as f64).sqrt();
        return Tensor::from_fn(shape, |_| {
            T::from_f64(rng.sample::<f64, _>(StandardNormal) * scale)
        });
    }
    let leaf = name.rsplit('.').next().unwrap_or(name);
    if name.contains("ln") && leaf == "g" {
        return Tensor::full(shape, T::one());
    }
    if shape.len() == 1 {
        return Tensor::zeros(shape);
    }
    let bound = 1.0 / (shape[0] as f64).sqrt();
    Tensor::from_fn(shape, |_| T::from_f64(rng.gen_range(-bound..bound)))
}

fn linear<T: Scalar>(tape: &mut Tape<T>, x: Var, w: Var, b: Var) -> Result<Var, ModelError> {
    let y = tape.matmul(x, w)?;
    Ok(tape.add_row(y, b)?)
}

impl<T: Scalar> Model<T> {
    /// Freshly initialized weights drawn from `config.seed`.
    pub fn new(config: ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let layout = config.param_layout();
        let params = layout
            .iter()
            .map(|(name, shape)| init_tensor(name, shape, &mut rng))
            .collect();
        Self::assemble(config, layout.into_iter().map(|(n, _)| n).collect(), params)
    }

    /// Weights supplied by name, in any order.
    pub fn from_named(
        config: ModelConfig,
        tensors: Vec<(String, Tensor<T>)>,
    ) -> Result<Self, ModelError> {
        config.validate()?;
        let mut by_name: HashMap<String, Tensor<T>> = tensors.into_iter().collect();
        let layout = config.param_layout();
        let mut params = Vec::with_capacity(layout.len());
        for (name, shape) in &layout {
            let t = by_name
                .remove(name)
                .ok_or_else(|| ModelError::Checkpoint(format!("missing tensor {name}")))?;
            if t.shape() != shape.as_slice() {
                return Err(ModelError::Checkpoint(format!(
                    "tensor {name} has shape {:?}, config expects {shape:?}",
                    t.shape()
                )));
            }
            params.push(t);
        }
        if let Some(extra) = by_name.keys().next() {
            return Err(ModelError::Checkpoint(format!("unexpected tensor {extra}")));
        }
        Self::assemble(config, layout.into_iter().map(|(n, _)| n).collect(), params)
    }

    fn assemble(
        config: ModelConfig,
        names: Vec<String>,
        params: Vec<Tensor<T>>,
    ) -> Result<Self, ModelError> {
        let slots = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect();
        Ok(Self {
            config,
            names,
            params,
            slots,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::numel).sum()
    }

    pub fn slot(&self, name: &str) -> Option<usize> {
        self.slots.get(name).copied()
    }

    pub fn named(&self) -> Vec<(String, Tensor<T>)> {
        self.names
            .iter()
            .cloned()
            .zip(self.params.iter().cloned())
            .collect()
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            names: self.names.clone(),
            params: self.params.iter().map(Tensor::cast).collect(),
            slots: self.slots.clone(),
        }
    }

    fn check_batch(&self, batch: &Batch) -> Result<usize, ModelError> {
        let b = batch.len();
        if b == 0 || batch.texts.len() != b {
            return Err(ModelError::Input(
                "batch must pair each grid with one text".into(),
            ));
        }
        let l = batch.text_len();
        if l == 0 || batch.texts.iter().any(|t| t.len() != l) {
            return Err(ModelError::Input(
                "texts in a batch must share a nonzero length".into(),
            ));
        }
        if l > self.config.max_text_len {
            return Err(ModelError::Input(format!(
                "text of {l} tokens exceeds the maximum of {}",
                self.config.max_text_len
            )));
        }
        if let Some(&bad) = batch
            .texts
            .iter()
            .flatten()
            .find(|&&t| t as usize >= self.config.vocab_size)
        {
            return Err(ModelError::Input(format!("unknown token id {bad}")));
        }
        if let Some(&bad) = batch.grids.iter().flatten().find(|&&d| d as usize > SIZE) {
            return Err(ModelError::Input(format!("grid digit {bad} out of range")));
        }
        if let Some(order) = &batch.cell_order {
            let mut seen = [false; CELLS];
            if order.len() != CELLS
                || order
                    .iter()
                    .any(|&i| i >= CELLS || std::mem::replace(&mut seen[i], true))
            {
                return Err(ModelError::Input(
                    "cell order is not a permutation of 36 cells".into(),
                ));
            }
        }
        if self.config.pe_scheme == PeScheme::Srl {
            let labels = batch
                .srl
                .as_ref()
                .ok_or_else(|| ModelError::Input("SRL model needs position labels".into()))?;
            let n = self.config.srl_n();
            if labels.len() != b
                || labels
                    .iter()
                    .any(|s| s.len() < l || s.iter().any(|&x| x >= n))
            {
                return Err(ModelError::Input(
                    "SRL labels do not cover the batch".into(),
                ));
            }
        }
        Ok(l)
    }

    fn grid_embedding(
        &self,
        tape: &mut Tape<T>,
        vars: &[Var],
        batch: &Batch,
    ) -> Result<Var, ModelError> {
        let p = |name: &str| vars[self.slots[name]];
        let b = batch.len();
        let order: Vec<usize> = match &batch.cell_order {
            Some(perm) => perm.clone(),
            None => (0..CELLS).collect(),
        };
        let cells = || (0..b).flat_map(|_| order.iter().copied());
        let rows: Vec<usize> = cells().map(|i| i / SIZE).collect();
        let cols: Vec<usize> = cells().map(|i| i % SIZE).collect();
        let digits: Vec<usize> = batch
            .grids
            .iter()
            .flat_map(|g| order.iter().map(move |&i| g[i] as usize))
            .collect();
        let re = tape.embedding(p("embed.row"), &rows)?;
        let ce = tape.embedding(p("embed.col"), &cols)?;
        let coords = tape.concat_cols(re, ce)?;
        let de = tape.embedding(p("embed.digit"), &digits)?;
        Ok(tape.add(coords, de)?)
    }

    fn text_embedding(
        &self,
        tape: &mut Tape<T>,
        vars: &[Var],
        batch: &Batch,
        l: usize,
    ) -> Result<Var, ModelError> {
        let p = |name: &str| vars[self.slots[name]];
        let b = batch.len();
        let d = self.config.d_model;
        let ids: Vec<usize> = batch.texts.iter().flatten().map(|&t| t as usize).collect();
        let text = tape.embedding(p("embed.text"), &ids)?;
        let pe = match self.config.pe_scheme {
            PeScheme::Sinusoidal => {
                let table: Vec<Vec<f64>> = (0..l).map(|pos| sinusoidal_pe(pos, d)).collect();
                let pe = Tensor::from_fn(&[b * l, d], |i| T::from_f64(table[(i / d) % l][i % d]));
                tape.constant(pe)
            }
            PeScheme::Srl => {
                let labels: Vec<usize> = batch
                    .srl
                    .as_ref()
                    .expect("checked")
                    .iter()
                    .flat_map(|s| s[..l].iter().copied())
                    .collect();
                tape.embedding(p("embed.srl"), &labels)?
            }
            PeScheme::Alibi | PeScheme::None => return Ok(text),
        };
        Ok(tape.add(text, pe)?)
    }

    /// The 36 cell vectors of one grid in row-major order, `[36, d_model]`.
    pub fn embed_grid(&self, grid: &[u8; CELLS]) -> Result<Tensor<T>, ModelError> {
        let batch = Batch {
            grids: vec![*grid],
            texts: vec![vec![0]],
            ..Batch::default()
        };
        let mut tape = Tape::new();
        let vars = self.constants(&mut tape);
        let v = self.grid_embedding(&mut tape, &vars, &batch)?;
        Ok(tape.value(v).clone())
    }

    /// Token vectors with the positional scheme applied, `[batch * len, d_model]`.
    pub fn embed_text(&self, batch: &Batch) -> Result<Tensor<T>, ModelError> {
        let l = self.check_batch(batch)?;
        let mut tape = Tape::new();
        let vars = self.constants(&mut tape);
        let v = self.text_embedding(&mut tape, &vars, batch, l)?;
        Ok(tape.value(v).clone())
    }

    fn constants(&self, tape: &mut Tape<T>) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| tape.constant(p.clone()))
            .collect()
    }

    /// Teacher-forced pass over a batch.
    pub fn forward(
        &self,
        tape: &mut Tape<T>,
        batch: &Batch,
        mut mode: Mode<'_>,
    ) -> Result<ForwardOutput, ModelError> {
        let l = self.check_batch(batch)?;
        let b = batch.len();
        let cfg = &self.config;
        let vars: Vec<Var> = match mode {
            Mode::Eval => self.constants(tape),
            Mode::Train(_) => self
                .params
                .iter()
                .enumerate()
                .map(|(i, p)| tape.param(i, p.clone()))
                .collect(),
        };
        let p = |name: &str| vars[self.slots[name]];
        let grid = self.grid_embedding(tape, &vars, batch)?;
        let text = self.text_embedding(tape, &vars, batch, l)?;
        let mut x = tape.concat_seq(grid, text, b)?;
        let bias = tape.constant(attention_bias(cfg, l));
        let mut attention = Vec::with_capacity(cfg.n_layers);
        for i in 0..cfg.n_layers {
            let name = |s: &str| format!("layer{i}.{s}");
            let pn = |s: &str| p(&name(s));
            let pre = cfg.norm == NormPlacement::Pre;

            let a_in = if pre {
                tape.layer_norm(x, pn("ln1.g"), pn("ln1.b"), LN_EPS)?
            } else {
                x
            };
            let q = linear(tape, a_in, pn("attn.wq"), pn("attn.bq"))?;
            let k = linear(tape, a_in, pn("attn.wk"), pn("attn.bk"))?;
            let v = linear(tape, a_in, pn("attn.wv"), pn("attn.bv"))?;
            let att = tape.attention(q, k, v, bias, cfg.n_heads, b)?;
            attention.push(att);
            let mut a_out = linear(tape, att, pn("attn.wo"), pn("attn.bo"))?;
            a_out = self.dropout(tape, a_out, &mut mode)?;
            x = tape.add(x, a_out)?;
            if !pre {
                x = tape.layer_norm(x, pn("ln1.g"), pn("ln1.b"), LN_EPS)?;
            }

            let f_in = if pre {
                tape.layer_norm(x, pn("ln2.g"), pn("ln2.b"), LN_EPS)?
            } else {
                x
            };
            let hdn = linear(tape, f_in, pn("ff.w1"), pn("ff.b1"))?;
            let hdn = match cfg.activation {
                Activation::Relu => tape.relu(hdn)?,
                Activation::Gelu => tape.gelu(hdn)?,
            };
            let mut f_out = linear(tape, hdn, pn("ff.w2"), pn("ff.b2"))?;
            f_out = self.dropout(tape, f_out, &mut mode)?;
            x = tape.add(x, f_out)?;
            if !pre {
                x = tape.layer_norm(x, pn("ln2.g"), pn("ln2.b"), LN_EPS)?;
            }
        }
        if cfg.norm == NormPlacement::Pre {
            x = tape.layer_norm(x, p("final_ln.g"), p("final_ln.b"), LN_EPS)?;
        }
        let text_out = tape.slice_seq(x, b, GRID_SLOTS, l)?;
        let logits = linear(tape, text_out, p("decoder.w"), p("decoder.b"))?;
        Ok(ForwardOutput {
            logits,
            attention,
            batch: b,
            text_len: l,
        })
    }

    fn dropout(&self, tape: &mut Tape<T>, x: Var, mode: &mut Mode<'_>) -> Result<Var, ModelError> {
        let rate = self.config.dropout;
        match mode {
            Mode::Train(rng) if rate > 0.0 => {
                let n = tape.value(x).numel();
                let keep: Vec<bool> = (0..n).map(|_| rng.gen::<f64>() >= rate).collect();
                Ok(tape.dropout(x, &keep, rate)?)
            }
            _ => Ok(x),
        }
    }

    /// Masked next-token cross-entropy of a teacher-forced batch.
    pub fn loss(
        &self,
        tape: &mut Tape<T>,
        batch: &Batch,
        masks: &[LossMask],
        mode: Mode<'_>,
    ) -> Result<(Var, ForwardOutput), ModelError> {
        if masks.len() != batch.len() {
            return Err(ModelError::Input(
                "one loss mask per sequence required".into(),
            ));
        }
        let out = self.forward(tape, batch, mode)?;
        let l = out.text_len;
        let mut targets = Vec::with_capacity(batch.len() * l);
        let mut flags = Vec::with_capacity(batch.len() * l);
        for (text, mask) in batch.texts.iter().zip(masks) {
            if mask.len() != l {
                return Err(ModelError::Input(format!(
                    "loss mask of {} positions for a text of {l}",
                    mask.len()
                )));
            }
            for j in 0..l {
                let next = text.get(j + 1).copied();
                targets.push(next.unwrap_or(0) as usize);
                flags.push(mask.0[j] && next.is_some());
            }
        }
        let loss = tape.cross_entropy(out.logits, &targets, &flags)?;
        Ok((loss, out))
    }
}
