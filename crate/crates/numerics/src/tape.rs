//! Reverse-mode differentiation over a linear record of primitive ops.
//!
//! Every op appends one node holding its output value. [`Tape::backward`]
//! walks the record from the loss towards the leaves exactly once; running it
//! a second time on the same record is an error until [`Tape::reset`].

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::NumericsError;
use crate::kernels::{gelu, gelu_grad, softmax_row, softmax_row_backward, softmax_row_grad};
use crate::scalar::{gemm, Scalar, View, ViewMut};
use crate::tensor::Tensor;

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a node on a specific tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    index: usize,
}

enum Op<T> {
    Leaf,
    MatMul(usize, usize),
    BatchedMatMul(usize, usize),
    Add(usize, usize),
    Mul(usize, usize),
    AddRow(usize, usize),
    Scale(usize, T),
    Relu(usize),
    Gelu(usize),
    Sum(usize),
    LayerNorm {
        x: usize,
        gain: usize,
        bias: usize,
        xhat: Vec<T>,
        rstd: Vec<T>,
    },
    Embedding {
        table: usize,
        ids: Vec<usize>,
    },
    ConcatCols(usize, usize),
    ConcatSeq {
        a: usize,
        b: usize,
        batch: usize,
    },
    SliceSeq {
        x: usize,
        batch: usize,
        start: usize,
    },
    MaskedSoftmax(usize),
    Attention {
        q: usize,
        k: usize,
        v: usize,
        heads: usize,
        batch: usize,
        probs: Vec<T>,
    },
    CrossEntropy {
        logits: usize,
        targets: Vec<usize>,
        mask: Vec<bool>,
        probs: Vec<T>,
    },
    Dropout {
        x: usize,
        scale: Vec<T>,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
    param: Option<usize>,
}

pub struct Tape<T: Scalar> {
    id: u64,
    nodes: Vec<Node<T>>,
    consumed: bool,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn shape_err<T>(msg: impl Into<String>) -> Result<T, NumericsError> {
    Err(NumericsError::Shape(msg.into()))
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            consumed: false,
        }
    }

    /// Drops the record so the tape can be reused. Old handles become detached.
    pub fn reset(&mut self) {
        self.id = NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed);
        self.nodes.clear();
        self.consumed = false;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn idx(&self, v: Var) -> Result<usize, NumericsError> {
        if v.tape != self.id || v.index >= self.nodes.len() {
            return Err(NumericsError::Tape("handle belongs to another tape".into()));
        }
        Ok(v.index)
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[usize]) -> Var {
        let requires_grad = inputs.iter().any(|&i| self.nodes[i].requires_grad);
        self.push_node(value, op, requires_grad, None)
    }

    fn push_node(
        &mut self,
        value: Tensor<T>,
        op: Op<T>,
        requires_grad: bool,
        param: Option<usize>,
    ) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            param,
        });
        Var {
            tape: self.id,
            index: self.nodes.len() - 1,
        }
    }

    /// A value that is never differentiated.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push_node(value, Op::Leaf, false, None)
    }

    /// A differentiable leaf not tied to a parameter slot.
    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.push_node(value, Op::Leaf, true, None)
    }

    /// A differentiable leaf whose gradient is reported under `slot`.
    pub fn param(&mut self, slot: usize, value: Tensor<T>) -> Var {
        self.push_node(value, Op::Leaf, true, Some(slot))
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[self.idx(v).expect("handle from this tape")].value
    }

    pub fn try_value(&self, v: Var) -> Result<&Tensor<T>, NumericsError> {
        Ok(&self.nodes[self.idx(v)?].value)
    }

    /// Saved attention weights `[batch, heads, len, len]` of an attention node.
    pub fn attention_probs(&self, v: Var) -> Option<(&[T], usize, usize)> {
        match &self.nodes[self.idx(v).ok()?].op {
            Op::Attention {
                probs,
                heads,
                batch,
                ..
            } => Some((probs.as_slice(), *batch, *heads)),
            _ => None,
        }
    }

    fn mat(&self, i: usize) -> Result<(usize, usize), NumericsError> {
        let s = self.nodes[i].value.shape();
        if s.len() != 2 {
            return shape_err(format!("expected a matrix, got shape {s:?}"));
        }
        Ok((s[0], s[1]))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (ai, bi) = (self.idx(a)?, self.idx(b)?);
        let (m, k) = self.mat(ai)?;
        let (k2, n) = self.mat(bi)?;
        if k != k2 {
            return shape_err(format!("matmul inner dimensions {k} and {k2} differ"));
        }
        let mut out = vec![T::zero(); m * n];
        gemm(
            m,
            k,
            n,
            T::one(),
            View::rows(self.nodes[ai].value.data(), 0, k),
            View::rows(self.nodes[bi].value.data(), 0, n),
            T::zero(),
            ViewMut::rows(&mut out, 0, n),
        );
        Ok(self.push(Tensor::new(&[m, n], out)?, Op::MatMul(ai, bi), &[ai, bi]))
    }

    /// `[batch, m, k] x [batch, k, n] -> [batch, m, n]`.
    pub fn batched_matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (ai, bi) = (self.idx(a)?, self.idx(b)?);
        let (sa, sb) = (self.nodes[ai].value.shape(), self.nodes[bi].value.shape());
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sa[2] != sb[1] {
            return shape_err(format!("batched matmul of {sa:?} and {sb:?}"));
        }
        let (bt, m, k, n) = (sa[0], sa[1], sa[2], sb[2]);
        let mut out = vec![T::zero(); bt * m * n];
        for t in 0..bt {
            gemm(
                m,
                k,
                n,
                T::one(),
                View::rows(self.nodes[ai].value.data(), t * m * k, k),
                View::rows(self.nodes[bi].value.data(), t * k * n, n),
                T::zero(),
                ViewMut::rows(&mut out, t * m * n, n),
            );
        }
        Ok(self.push(
            Tensor::new(&[bt, m, n], out)?,
            Op::BatchedMatMul(ai, bi),
            &[ai, bi],
        ))
    }

    fn same_shape(&self, ai: usize, bi: usize) -> Result<(), NumericsError> {
        let (sa, sb) = (self.nodes[ai].value.shape(), self.nodes[bi].value.shape());
        if sa != sb {
            return shape_err(format!("shapes {sa:?} and {sb:?} differ"));
        }
        Ok(())
    }

    fn zip_map(&self, ai: usize, bi: usize, f: impl Fn(T, T) -> T) -> Tensor<T> {
        let (a, b) = (&self.nodes[ai].value, &self.nodes[bi].value);
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(a.shape(), data).expect("same shape")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (ai, bi) = (self.idx(a)?, self.idx(b)?);
        self.same_shape(ai, bi)?;
        let out = self.zip_map(ai, bi, |x, y| x + y);
        Ok(self.push(out, Op::Add(ai, bi), &[ai, bi]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (ai, bi) = (self.idx(a)?, self.idx(b)?);
        self.same_shape(ai, bi)?;
        let out = self.zip_map(ai, bi, |x, y| x * y);
        Ok(self.push(out, Op::Mul(ai, bi), &[ai, bi]))
    }

    /// Adds a `[n]` vector to every row of `[.., n]`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, NumericsError> {
        let (ai, bi) = (self.idx(a)?, self.idx(row)?);
        let n = self.nodes[ai].value.last_dim();
        if self.nodes[bi].value.numel() != n {
            return shape_err(format!(
                "row of {} values cannot broadcast over {:?}",
                self.nodes[bi].value.numel(),
                self.nodes[ai].value.shape()
            ));
        }
        let mut out = self.nodes[ai].value.clone();
        let row = self.nodes[bi].value.data();
        for chunk in out.data_mut().chunks_mut(n) {
            for (o, &r) in chunk.iter_mut().zip(row) {
                *o = *o + r;
            }
        }
        Ok(self.push(out, Op::AddRow(ai, bi), &[ai, bi]))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Result<Var, NumericsError> {
        let ai = self.idx(a)?;
        let mut out = self.nodes[ai].value.clone();
        out.data_mut().iter_mut().for_each(|v| *v = *v * c);
        Ok(self.push(out, Op::Scale(ai, c), &[ai]))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, NumericsError> {
        let ai = self.idx(a)?;
        let mut out = self.nodes[ai].value.clone();
        out.data_mut().iter_mut().for_each(|v| *v = v.max(T::zero()));
        Ok(self.push(out, Op::Relu(ai), &[ai]))
    }

    pub fn gelu(&mut self, a: Var) -> Result<Var, NumericsError> {
        let ai = self.idx(a)?;
        let mut out = self.nodes[ai].value.clone();
        out.data_mut().iter_mut().for_each(|v| *v = gelu(*v));
        Ok(self.push(out, Op::Gelu(ai), &[ai]))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, NumericsError> {
        let ai = self.idx(a)?;
        let total: T = self.nodes[ai].value.data().iter().copied().sum();
        Ok(self.push(Tensor::scalar(total), Op::Sum(ai), &[ai]))
    }

    /// Normalizes each last-axis vector, then applies `gain` and `bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var, NumericsError> {
        let (xi, gi, bi) = (self.idx(x)?, self.idx(gain)?, self.idx(bias)?);
        let d = self.nodes[xi].value.last_dim();
        if d < 2 {
            return shape_err("layer norm needs at least two features");
        }
        if self.nodes[gi].value.numel() != d || self.nodes[bi].value.numel() != d {
            return shape_err("layer norm gain/bias size mismatch");
        }
        let eps = T::from_f64(eps);
        let inv_d = T::from_f64(1.0 / d as f64);
        let xv = &self.nodes[xi].value;
        let rows = xv.rows();
        let mut xhat = vec![T::zero(); xv.numel()];
        let mut rstd = vec![T::zero(); rows];
        let mut out = vec![T::zero(); xv.numel()];
        let (g, b) = (self.nodes[gi].value.data(), self.nodes[bi].value.data());
        for r in 0..rows {
            let row = &xv.data()[r * d..(r + 1) * d];
            let mean = row.iter().copied().sum::<T>() * inv_d;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_d;
            let rs = (var + eps).sqrt().recip();
            rstd[r] = rs;
            for j in 0..d {
                let h = (row[j] - mean) * rs;
                xhat[r * d + j] = h;
                out[r * d + j] = h * g[j] + b[j];
            }
        }
        let out = Tensor::new(xv.shape(), out)?;
        Ok(self.push(
            out,
            Op::LayerNorm {
                x: xi,
                gain: gi,
                bias: bi,
                xhat,
                rstd,
            },
            &[xi, gi, bi],
        ))
    }

    /// Row lookup: `table[ids[i]]` for each `i`.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var, NumericsError> {
        let ti = self.idx(table)?;
        let (v, d) = self.mat(ti)?;
        let mut out = Vec::with_capacity(ids.len() * d);
        let data = self.nodes[ti].value.data();
        for &id in ids {
            if id >= v {
                return shape_err(format!("embedding id {id} outside table of {v} rows"));
            }
            out.extend_from_slice(&data[id * d..(id + 1) * d]);
        }
        let out = Tensor::new(&[ids.len(), d], out)?;
        Ok(self.push(
            out,
            Op::Embedding {
                table: ti,
                ids: ids.to_vec(),
            },
            &[ti],
        ))
    }

    /// `[n, p]` beside `[n, q]` gives `[n, p + q]`.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (ai, bi) = (self.idx(a)?, self.idx(b)?);
        let (n, p) = self.mat(ai)?;
        let (n2, q) = self.mat(bi)?;
        if n != n2 {
            return shape_err(format!("concat of {n} and {n2} rows"));
        }
        let (ad, bd) = (self.nodes[ai].value.data(), self.nodes[bi].value.data());
        let mut out = Vec::with_capacity(n * (p + q));
        for r in 0..n {
            out.extend_from_slice(&ad[r * p..(r + 1) * p]);
            out.extend_from_slice(&bd[r * q..(r + 1) * q]);
        }
        let out = Tensor::new(&[n, p + q], out)?;
        Ok(self.push(out, Op::ConcatCols(ai, bi), &[ai, bi]))
    }

    /// Joins two batched sequences along the sequence axis: per batch element,
    /// the rows of `a` followed by the rows of `b`.
    pub fn concat_seq(&mut self, a: Var, b: Var, batch: usize) -> Result<Var, NumericsError> {
        let (ai, bi) = (self.idx(a)?, self.idx(b)?);
        let (na, d) = self.mat(ai)?;
        let (nb, d2) = self.mat(bi)?;
        if d != d2 || batch == 0 || na % batch != 0 || nb % batch != 0 {
            return shape_err("concat_seq operands do not split evenly into the batch");
        }
        let (la, lb) = (na / batch, nb / batch);
        let (ad, bd) = (self.nodes[ai].value.data(), self.nodes[bi].value.data());
        let mut out = Vec::with_capacity((na + nb) * d);
        for t in 0..batch {
            out.extend_from_slice(&ad[t * la * d..(t + 1) * la * d]);
            out.extend_from_slice(&bd[t * lb * d..(t + 1) * lb * d]);
        }
        let out = Tensor::new(&[na + nb, d], out)?;
        Ok(self.push(out, Op::ConcatSeq { a: ai, b: bi, batch }, &[ai, bi]))
    }

    /// Rows `start..start + len` of every batch element.
    pub fn slice_seq(
        &mut self,
        x: Var,
        batch: usize,
        start: usize,
        len: usize,
    ) -> Result<Var, NumericsError> {
        let xi = self.idx(x)?;
        let (n, d) = self.mat(xi)?;
        if batch == 0 || n % batch != 0 || start + len > n / batch {
            return shape_err("slice_seq range outside the sequence");
        }
        let s = n / batch;
        let data = self.nodes[xi].value.data();
        let mut out = Vec::with_capacity(batch * len * d);
        for t in 0..batch {
            let from = (t * s + start) * d;
            out.extend_from_slice(&data[from..from + len * d]);
        }
        let out = Tensor::new(&[batch * len, d], out)?;
        Ok(self.push(out, Op::SliceSeq { x: xi, batch, start }, &[xi]))
    }

    /// Softmax over the last axis after adding `mask`. The mask has shape
    /// `[m, L]` and is applied to row `r` as mask row `r % m`; entries at or
    /// below `-1e9` are disallowed. A row with no allowed entry is an error.
    pub fn masked_softmax(&mut self, x: Var, mask: Option<&Tensor<T>>) -> Result<Var, NumericsError> {
        let xi = self.idx(x)?;
        let mut out = self.nodes[xi].value.clone();
        let l = out.last_dim();
        if let Some(mask) = mask {
            if mask.last_dim() != l || !out.rows().is_multiple_of(mask.rows()) {
                return shape_err(format!(
                    "mask {:?} does not broadcast over {:?}",
                    mask.shape(),
                    out.shape()
                ));
            }
        }
        for (r, row) in out.data_mut().chunks_mut(l).enumerate() {
            if let Some(mask) = mask {
                let m = r % mask.rows();
                for (v, &a) in row.iter_mut().zip(&mask.data()[m * l..(m + 1) * l]) {
                    *v = *v + a;
                }
            }
            if !softmax_row(row) {
                return Err(NumericsError::Mask(format!("row {r} is fully masked")));
            }
        }
        Ok(self.push(out, Op::MaskedSoftmax(xi), &[xi]))
    }

    /// Multi-head scaled dot-product attention.
    ///
    /// `q`, `k`, `v` are `[batch * len, d]` with head `h` in columns
    /// `h * d / heads ..`; `bias` is a constant `[heads, len, len]` added to
    /// the scaled scores (masking and positional biases).
    pub fn attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        bias: Var,
        heads: usize,
        batch: usize,
    ) -> Result<Var, NumericsError> {
        let (qi, ki, vi, bi) = (self.idx(q)?, self.idx(k)?, self.idx(v)?, self.idx(bias)?);
        let (n, d) = self.mat(qi)?;
        if self.nodes[ki].value.shape() != [n, d] || self.nodes[vi].value.shape() != [n, d] {
            return shape_err("q, k and v shapes differ");
        }
        if heads == 0 || d % heads != 0 || batch == 0 || n % batch != 0 {
            return shape_err("attention head or batch split is uneven");
        }
        let s = n / batch;
        let dh = d / heads;
        if self.nodes[bi].value.shape() != [heads, s, s] {
            return shape_err(format!(
                "attention bias {:?} should be {:?}",
                self.nodes[bi].value.shape(),
                [heads, s, s]
            ));
        }
        let scale = T::from_f64(1.0 / (dh as f64).sqrt());
        let (qd, kd, vd) = (
            self.nodes[qi].value.data(),
            self.nodes[ki].value.data(),
            self.nodes[vi].value.data(),
        );
        let bias_data = self.nodes[bi].value.data();
        let mut probs = vec![T::zero(); batch * heads * s * s];
        let mut out = vec![T::zero(); n * d];
        for t in 0..batch {
            for h in 0..heads {
                let base = t * s * d + h * dh;
                let p_off = (t * heads + h) * s * s;
                let p = &mut probs[p_off..p_off + s * s];
                p.copy_from_slice(&bias_data[h * s * s..(h + 1) * s * s]);
                gemm(
                    s,
                    dh,
                    s,
                    scale,
                    View::rows(qd, base, d),
                    View::transposed(kd, base, d),
                    T::one(),
                    ViewMut::rows(p, 0, s),
                );
                for (r, row) in p.chunks_mut(s).enumerate() {
                    if !softmax_row(row) {
                        return Err(NumericsError::Mask(format!(
                            "attention row {r} of head {h} is fully masked"
                        )));
                    }
                }
                gemm(
                    s,
                    s,
                    dh,
                    T::one(),
                    View::rows(&probs[p_off..p_off + s * s], 0, s),
                    View::rows(vd, base, d),
                    T::zero(),
                    ViewMut::rows(&mut out, base, d),
                );
            }
        }
        let out = Tensor::new(&[n, d], out)?;
        Ok(self.push(
            out,
            Op::Attention {
                q: qi,
                k: ki,
                v: vi,
                heads,
                batch,
                probs,
            },
            &[qi, ki, vi],
        ))
    }

    /// Mean negative log-likelihood of `targets` over rows where `mask` is set.
    pub fn cross_entropy(
        &mut self,
        logits: Var,
        targets: &[usize],
        mask: &[bool],
    ) -> Result<Var, NumericsError> {
        let li = self.idx(logits)?;
        let (n, vocab) = self.mat(li)?;
        if targets.len() != n || mask.len() != n {
            return shape_err(format!(
                "{n} logit rows but {} targets and {} mask entries",
                targets.len(),
                mask.len()
            ));
        }
        let count = mask.iter().filter(|&&m| m).count();
        if count == 0 {
            return Err(NumericsError::Loss("loss mask selects no positions".into()));
        }
        let mut probs = self.nodes[li].value.data().to_vec();
        let mut total = T::zero();
        for (r, row) in probs.chunks_mut(vocab).enumerate() {
            if !mask[r] {
                continue;
            }
            if targets[r] >= vocab {
                return shape_err(format!("target {} outside vocabulary", targets[r]));
            }
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = row.iter().map(|&v| (v - max).exp()).sum::<T>().ln() + max;
            total = total + lse - row[targets[r]];
            softmax_row(row);
        }
        let loss = total / T::from_f64(count as f64);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits: li,
                targets: targets.to_vec(),
                mask: mask.to_vec(),
                probs,
            },
            &[li],
        ))
    }

    /// Inverted dropout with a caller-supplied keep pattern.
    pub fn dropout(&mut self, x: Var, keep: &[bool], rate: f64) -> Result<Var, NumericsError> {
        let xi = self.idx(x)?;
        if keep.len() != self.nodes[xi].value.numel() || !(0.0..1.0).contains(&rate) {
            return shape_err("dropout keep pattern or rate invalid");
        }
        let factor = T::from_f64(1.0 / (1.0 - rate));
        let scale: Vec<T> = keep
            .iter()
            .map(|&k| if k { factor } else { T::zero() })
            .collect();
        let mut out = self.nodes[xi].value.clone();
        for (o, &s) in out.data_mut().iter_mut().zip(&scale) {
            *o = *o * s;
        }
        Ok(self.push(out, Op::Dropout { x: xi, scale }, &[xi]))
    }

    /// Reverse-mode accumulation from a scalar `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients<T>, NumericsError> {
        let li = self.idx(loss)?;
        if self.consumed {
            return Err(NumericsError::Tape(
                "backward already ran on this record; reset the tape first".into(),
            ));
        }
        if self.nodes[li].value.numel() != 1 {
            return Err(NumericsError::Tape(format!(
                "loss must be a scalar, got shape {:?}",
                self.nodes[li].value.shape()
            )));
        }
        if !self.nodes[li].requires_grad {
            return Err(NumericsError::Tape(
                "loss is detached from every differentiable input".into(),
            ));
        }
        self.consumed = true;
        let nodes = &self.nodes;
        let mut grads: Vec<Option<Vec<T>>> = (0..nodes.len()).map(|_| None).collect();
        grads[li] = Some(vec![T::one()]);
        for i in (0..=li).rev() {
            let Some(g) = grads[i].take() else { continue };
            backprop_node(nodes, i, &g, &mut grads);
            if matches!(nodes[i].op, Op::Leaf) {
                grads[i] = Some(g);
            }
        }
        let shapes = nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        let params = nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| n.param.map(|slot| (slot, i)))
            .collect();
        Ok(Gradients {
            tape: self.id,
            grads,
            shapes,
            params,
        })
    }
}

/// Gradient buffer of node `i`, created on first use.
fn slot<'g, T: Scalar>(
    nodes: &[Node<T>],
    grads: &'g mut [Option<Vec<T>>],
    i: usize,
) -> Option<&'g mut Vec<T>> {
    if !nodes[i].requires_grad {
        return None;
    }
    Some(grads[i].get_or_insert_with(|| vec![T::zero(); nodes[i].value.numel()]))
}

fn backprop_node<T: Scalar>(nodes: &[Node<T>], i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
    let out = &nodes[i].value;
    match &nodes[i].op {
        Op::Leaf => {}
        &Op::MatMul(a, b) => {
            let (m, k) = (nodes[a].value.shape()[0], nodes[a].value.shape()[1]);
            let n = nodes[b].value.shape()[1];
            if let Some(da) = slot(nodes, grads, a) {
                gemm(
                    m,
                    n,
                    k,
                    T::one(),
                    View::rows(g, 0, n),
                    View::transposed(nodes[b].value.data(), 0, n),
                    T::one(),
                    ViewMut::rows(da, 0, k),
                );
            }
            if let Some(db) = slot(nodes, grads, b) {
                gemm(
                    k,
                    m,
                    n,
                    T::one(),
                    View::transposed(nodes[a].value.data(), 0, k),
                    View::rows(g, 0, n),
                    T::one(),
                    ViewMut::rows(db, 0, n),
                );
            }
        }
        &Op::BatchedMatMul(a, b) => {
            let sa = nodes[a].value.shape();
            let (bt, m, k) = (sa[0], sa[1], sa[2]);
            let n = nodes[b].value.shape()[2];
            if let Some(da) = slot(nodes, grads, a) {
                for t in 0..bt {
                    gemm(
                        m,
                        n,
                        k,
                        T::one(),
                        View::rows(g, t * m * n, n),
                        View::transposed(nodes[b].value.data(), t * k * n, n),
                        T::one(),
                        ViewMut::rows(da, t * m * k, k),
                    );
                }
            }
            if let Some(db) = slot(nodes, grads, b) {
                for t in 0..bt {
                    gemm(
                        k,
                        m,
                        n,
                        T::one(),
                        View::transposed(nodes[a].value.data(), t * m * k, k),
                        View::rows(g, t * m * n, n),
                        T::one(),
                        ViewMut::rows(db, t * k * n, n),
                    );
                }
            }
        }
        &Op::Add(a, b) => {
            for x in [a, b] {
                if let Some(dx) = slot(nodes, grads, x) {
                    dx.iter_mut().zip(g).for_each(|(d, &v)| *d = *d + v);
                }
            }
        }
        &Op::Mul(a, b) => {
            for (x, other) in [(a, b), (b, a)] {
                let ov = nodes[other].value.data();
                if let Some(dx) = slot(nodes, grads, x) {
                    for ((d, &v), &o) in dx.iter_mut().zip(g).zip(ov) {
                        *d = *d + v * o;
                    }
                }
            }
        }
        &Op::AddRow(a, row) => {
            if let Some(da) = slot(nodes, grads, a) {
                da.iter_mut().zip(g).for_each(|(d, &v)| *d = *d + v);
            }
            let n = nodes[row].value.numel();
            if let Some(dr) = slot(nodes, grads, row) {
                for chunk in g.chunks(n) {
                    dr.iter_mut().zip(chunk).for_each(|(d, &v)| *d = *d + v);
                }
            }
        }
        &Op::Scale(a, c) => {
            if let Some(da) = slot(nodes, grads, a) {
                da.iter_mut().zip(g).for_each(|(d, &v)| *d = *d + v * c);
            }
        }
        &Op::Relu(a) => {
            let x = nodes[a].value.data();
            if let Some(da) = slot(nodes, grads, a) {
                for ((d, &v), &xv) in da.iter_mut().zip(g).zip(x) {
                    if xv > T::zero() {
                        *d = *d + v;
                    }
                }
            }
        }
        &Op::Gelu(a) => {
            let x = nodes[a].value.data();
            if let Some(da) = slot(nodes, grads, a) {
                for ((d, &v), &xv) in da.iter_mut().zip(g).zip(x) {
                    *d = *d + v * gelu_grad(xv);
                }
            }
        }
        &Op::Sum(a) => {
            if let Some(da) = slot(nodes, grads, a) {
                da.iter_mut().for_each(|d| *d = *d + g[0]);
            }
        }
        Op::LayerNorm {
            x,
            gain,
            bias,
            xhat,
            rstd,
        } => {
            let (x, gain, bias) = (*x, *gain, *bias);
            let d = out.last_dim();
            let gv = nodes[gain].value.data();
            if let Some(dg) = slot(nodes, grads, gain) {
                for (gr, hr) in g.chunks(d).zip(xhat.chunks(d)) {
                    for j in 0..d {
                        dg[j] = dg[j] + gr[j] * hr[j];
                    }
                }
            }
            if let Some(db) = slot(nodes, grads, bias) {
                for gr in g.chunks(d) {
                    db.iter_mut().zip(gr).for_each(|(a, &v)| *a = *a + v);
                }
            }
            if let Some(dx) = slot(nodes, grads, x) {
                let inv_d = T::from_f64(1.0 / d as f64);
                let mut dxhat = vec![T::zero(); d];
                for r in 0..rstd.len() {
                    let gr = &g[r * d..(r + 1) * d];
                    let hr = &xhat[r * d..(r + 1) * d];
                    let mut sum = T::zero();
                    let mut dot = T::zero();
                    for j in 0..d {
                        dxhat[j] = gr[j] * gv[j];
                        sum = sum + dxhat[j];
                        dot = dot + dxhat[j] * hr[j];
                    }
                    let dxr = &mut dx[r * d..(r + 1) * d];
                    for j in 0..d {
                        dxr[j] = dxr[j] + rstd[r] * (dxhat[j] - inv_d * (sum + hr[j] * dot));
                    }
                }
            }
        }
        Op::Embedding { table, ids } => {
            let d = out.last_dim();
            if let Some(dt) = slot(nodes, grads, *table) {
                for (r, &id) in ids.iter().enumerate() {
                    let dst = &mut dt[id * d..(id + 1) * d];
                    dst.iter_mut()
                        .zip(&g[r * d..(r + 1) * d])
                        .for_each(|(a, &v)| *a = *a + v);
                }
            }
        }
        &Op::ConcatCols(a, b) => {
            let p = nodes[a].value.last_dim();
            let q = nodes[b].value.last_dim();
            if let Some(da) = slot(nodes, grads, a) {
                for (r, gr) in g.chunks(p + q).enumerate() {
                    da[r * p..(r + 1) * p]
                        .iter_mut()
                        .zip(&gr[..p])
                        .for_each(|(x, &v)| *x = *x + v);
                }
            }
            if let Some(db) = slot(nodes, grads, b) {
                for (r, gr) in g.chunks(p + q).enumerate() {
                    db[r * q..(r + 1) * q]
                        .iter_mut()
                        .zip(&gr[p..])
                        .for_each(|(x, &v)| *x = *x + v);
                }
            }
        }
        &Op::ConcatSeq { a, b, batch } => {
            let d = out.last_dim();
            let la = nodes[a].value.rows() / batch;
            let lb = nodes[b].value.rows() / batch;
            for t in 0..batch {
                let base = t * (la + lb) * d;
                if let Some(da) = slot(nodes, grads, a) {
                    da[t * la * d..(t + 1) * la * d]
                        .iter_mut()
                        .zip(&g[base..base + la * d])
                        .for_each(|(x, &v)| *x = *x + v);
                }
                if let Some(db) = slot(nodes, grads, b) {
                    db[t * lb * d..(t + 1) * lb * d]
                        .iter_mut()
                        .zip(&g[base + la * d..base + (la + lb) * d])
                        .for_each(|(x, &v)| *x = *x + v);
                }
            }
        }
        &Op::SliceSeq { x, batch, start } => {
            let d = out.last_dim();
            let len = out.rows() / batch;
            let s = nodes[x].value.rows() / batch;
            if let Some(dx) = slot(nodes, grads, x) {
                for t in 0..batch {
                    let from = (t * s + start) * d;
                    dx[from..from + len * d]
                        .iter_mut()
                        .zip(&g[t * len * d..(t + 1) * len * d])
                        .for_each(|(a, &v)| *a = *a + v);
                }
            }
        }
        &Op::MaskedSoftmax(x) => {
            let l = out.last_dim();
            if let Some(dx) = slot(nodes, grads, x) {
                for ((y, dy), dxr) in out.data().chunks(l).zip(g.chunks(l)).zip(dx.chunks_mut(l)) {
                    softmax_row_backward(y, dy, dxr);
                }
            }
        }
        Op::Attention {
            q,
            k,
            v,
            heads,
            batch,
            probs,
        } => {
            let (q, k, v, heads, batch) = (*q, *k, *v, *heads, *batch);
            let (n, d) = (out.rows(), out.last_dim());
            let s = n / batch;
            let dh = d / heads;
            let scale = T::from_f64(1.0 / (dh as f64).sqrt());
            let (qd, kd, vd) = (
                nodes[q].value.data(),
                nodes[k].value.data(),
                nodes[v].value.data(),
            );
            let fresh = |i: usize| nodes[i].requires_grad.then(|| vec![T::zero(); n * d]);
            let (mut dq, mut dk, mut dv) = (fresh(q), fresh(k), fresh(v));
            let mut dp = vec![T::zero(); s * s];
            let mut ds = vec![T::zero(); s * s];
            for t in 0..batch {
                for h in 0..heads {
                    let base = t * s * d + h * dh;
                    let p_off = (t * heads + h) * s * s;
                    let p = &probs[p_off..p_off + s * s];
                    if let Some(dv) = dv.as_mut() {
                        gemm(
                            s,
                            s,
                            dh,
                            T::one(),
                            View::transposed(p, 0, s),
                            View::rows(g, base, d),
                            T::one(),
                            ViewMut::rows(dv, base, d),
                        );
                    }
                    if dq.is_none() && dk.is_none() {
                        continue;
                    }
                    gemm(
                        s,
                        dh,
                        s,
                        T::one(),
                        View::rows(g, base, d),
                        View::transposed(vd, base, d),
                        T::zero(),
                        ViewMut::rows(&mut dp, 0, s),
                    );
                    for ((pr, dpr), dsr) in p.chunks(s).zip(dp.chunks(s)).zip(ds.chunks_mut(s)) {
                        softmax_row_grad(pr, dpr, dsr);
                    }
                    if let Some(dq) = dq.as_mut() {
                        gemm(
                            s,
                            s,
                            dh,
                            scale,
                            View::rows(&ds, 0, s),
                            View::rows(kd, base, d),
                            T::one(),
                            ViewMut::rows(dq, base, d),
                        );
                    }
                    if let Some(dk) = dk.as_mut() {
                        gemm(
                            s,
                            s,
                            dh,
                            scale,
                            View::transposed(&ds, 0, s),
                            View::rows(qd, base, d),
                            T::one(),
                            ViewMut::rows(dk, base, d),
                        );
                    }
                }
            }
            for (idx, buf) in [(q, dq), (k, dk), (v, dv)] {
                if let (Some(buf), Some(dst)) = (buf, slot(nodes, grads, idx)) {
                    dst.iter_mut().zip(&buf).for_each(|(a, &b)| *a = *a + b);
                }
            }
        }
        Op::CrossEntropy {
            logits,
            targets,
            mask,
            probs,
        } => {
            let vocab = nodes[*logits].value.last_dim();
            let count = mask.iter().filter(|&&m| m).count();
            let coef = g[0] / T::from_f64(count as f64);
            if let Some(dl) = slot(nodes, grads, *logits) {
                for (r, &m) in mask.iter().enumerate() {
                    if !m {
                        continue;
                    }
                    let row = &mut dl[r * vocab..(r + 1) * vocab];
                    let pr = &probs[r * vocab..(r + 1) * vocab];
                    for j in 0..vocab {
                        row[j] = row[j] + coef * pr[j];
                    }
                    row[targets[r]] = row[targets[r]] - coef;
                }
            }
        }
        Op::Dropout { x, scale } => {
            if let Some(dx) = slot(nodes, grads, *x) {
                for ((d, &v), &s) in dx.iter_mut().zip(g).zip(scale) {
                    *d = *d + v * s;
                }
            }
        }
    }
}

/// Result of one backward pass.
pub struct Gradients<T> {
    tape: u64,
    grads: Vec<Option<Vec<T>>>,
    shapes: Vec<Vec<usize>>,
    params: Vec<(usize, usize)>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient with respect to a leaf, `None` if it received none.
    pub fn wrt(&self, v: Var) -> Option<Tensor<T>> {
        if v.tape != self.tape {
            return None;
        }
        let data = self.grads.get(v.index)?.as_ref()?;
        Some(Tensor::new(&self.shapes[v.index], data.clone()).expect("gradient shape"))
    }

    /// Gradient for parameter `slot`, summed over every leaf registered under it.
    pub fn param(&self, slot: usize) -> Option<Tensor<T>> {
        let mut acc: Option<Tensor<T>> = None;
        for &(s, node) in &self.params {
            if s != slot {
                continue;
            }
            if let Some(data) = &self.grads[node] {
                let t = Tensor::new(&self.shapes[node], data.clone()).expect("gradient shape");
                match acc.as_mut() {
                    Some(a) => a.add_assign(&t).expect("same parameter shape"),
                    None => acc = Some(t),
                }
            }
        }
        acc
    }

    /// Adds every parameter gradient into `acc[slot]`.
    pub fn accumulate_into(&self, acc: &mut [Tensor<T>]) -> Result<(), NumericsError> {
        for &(slot, node) in &self.params {
            let Some(data) = &self.grads[node] else { continue };
            let target = acc
                .get_mut(slot)
                .ok_or_else(|| NumericsError::Shape(format!("no accumulator for slot {slot}")))?;
            if target.numel() != data.len() {
                return Err(NumericsError::Shape(format!(
                    "gradient of {} values for slot {slot} of {} values",
                    data.len(),
                    target.numel()
                )));
            }
            target
                .data_mut()
                .iter_mut()
                .zip(data)
                .for_each(|(a, &b)| *a = *a + b);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape, v).unwrap()
    }

    #[test]
    fn matmul_examples() {
        let mut tape = Tape::<f64>::new();
        let a = tape.constant(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let b = tape.constant(t(&[2, 1], &[0.0, 1.0]));
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(c).data(), &[2.0, 4.0]);
        let eye = tape.constant(t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
        let same = tape.matmul(eye, a).unwrap();
        assert_eq!(tape.value(same).data(), tape.value(a).data());
        let bad = tape.constant(t(&[3, 1], &[1.0, 2.0, 3.0]));
        assert!(matches!(tape.matmul(a, bad), Err(NumericsError::Shape(_))));
    }

    #[test]
    fn sum_of_product_gradient_is_ones_times_b_transposed() {
        let mut tape = Tape::<f64>::new();
        let a = tape.input(t(&[2, 3], &[1.0, -2.0, 0.5, 3.0, 1.0, 2.0]));
        let b = tape.input(t(&[3, 2], &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6]));
        let c = tape.matmul(a, b).unwrap();
        let s = tape.sum(c).unwrap();
        let grads = tape.backward(s).unwrap();
        let da = grads.wrt(a).unwrap();
        // Row i of ones[2,2] * B^T is the row sums of B.
        let expected = [0.3, 0.7, 1.1, 0.3, 0.7, 1.1];
        for (x, y) in da.data().iter().zip(expected) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn scalar_product_rule() {
        let mut tape = Tape::<f64>::new();
        let x = tape.input(Tensor::scalar(3.0));
        let y = tape.input(Tensor::scalar(-2.5));
        let p = tape.mul(x, y).unwrap();
        let grads = tape.backward(p).unwrap();
        assert_eq!(grads.wrt(x).unwrap().item(), -2.5);
        assert_eq!(grads.wrt(y).unwrap().item(), 3.0);
    }

    #[test]
    fn backward_twice_is_an_error() {
        let mut tape = Tape::<f64>::new();
        let x = tape.input(Tensor::scalar(1.0));
        let y = tape.scale(x, 2.0).unwrap();
        tape.backward(y).unwrap();
        assert!(matches!(tape.backward(y), Err(NumericsError::Tape(_))));
        tape.reset();
        assert!(matches!(tape.backward(y), Err(NumericsError::Tape(_))));
    }

    #[test]
    fn backward_on_detached_values_is_an_error() {
        let mut tape = Tape::<f64>::new();
        let c = tape.constant(Tensor::scalar(1.0));
        let y = tape.scale(c, 2.0).unwrap();
        assert!(matches!(tape.backward(y), Err(NumericsError::Tape(_))));
        let mut other = Tape::<f64>::new();
        let z = other.input(Tensor::scalar(1.0));
        assert!(matches!(tape.backward(z), Err(NumericsError::Tape(_))));
        let v = other.input(t(&[2], &[1.0, 2.0]));
        assert!(matches!(other.backward(v), Err(NumericsError::Tape(_))));
    }

    #[test]
    fn softmax_examples() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(t(&[1, 2], &[0.0, 0.0]));
        let y = tape.masked_softmax(x, None).unwrap();
        assert_eq!(tape.value(y).data(), &[0.5, 0.5]);
        let x = tape.constant(t(&[1, 2], &[3.0, 0.0]));
        let mask = t(&[1, 2], &[0.0, -1e9]);
        let y = tape.masked_softmax(x, Some(&mask)).unwrap();
        assert_eq!(tape.value(y).data()[0], 1.0);
        assert!(tape.value(y).data()[1] < 1e-300);
        let all = t(&[1, 2], &[-1e9, -1e9]);
        assert!(matches!(
            tape.masked_softmax(x, Some(&all)),
            Err(NumericsError::Mask(_))
        ));
    }

    #[test]
    fn layer_norm_of_constant_vector_is_bias() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(t(&[1, 4], &[2.0; 4]));
        let g = tape.constant(t(&[4], &[1.0; 4]));
        let b = tape.constant(t(&[4], &[0.0, 1.0, 2.0, 3.0]));
        let y = tape.layer_norm(x, g, b, 1e-5).unwrap();
        assert_eq!(tape.value(y).data(), &[0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn cross_entropy_closed_forms() {
        let mut tape = Tape::<f64>::new();
        let logits = tape.input(Tensor::zeros(&[3, 22]));
        let loss = tape
            .cross_entropy(logits, &[0, 5, 21], &[true, true, true])
            .unwrap();
        assert!((tape.value(loss).item() - 22f64.ln()).abs() < 1e-12);
        let mut peaked = vec![0.0; 22];
        peaked[4] = 60.0;
        let logits = tape.input(t(&[1, 22], &peaked));
        let loss = tape.cross_entropy(logits, &[4], &[true]).unwrap();
        assert!(tape.value(loss).item() < 1e-20);
        assert!(matches!(
            tape.cross_entropy(logits, &[4], &[false]),
            Err(NumericsError::Loss(_))
        ));
    }

    #[test]
    fn masked_position_has_no_gradient() {
        let mut tape = Tape::<f64>::new();
        let logits = tape.input(Tensor::from_fn(&[2, 3], |i| i as f64 * 0.3));
        let loss = tape.cross_entropy(logits, &[1, 2], &[true, false]).unwrap();
        let g = tape.backward(loss).unwrap().wrt(logits).unwrap();
        assert!(g.data()[3..].iter().all(|&v| v == 0.0));
        assert!(g.data()[..3].iter().any(|&v| v != 0.0));
    }
}
