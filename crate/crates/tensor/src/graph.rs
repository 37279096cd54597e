//! Tape-based computation graph.
//!
//! Every op appends a node whose inputs already exist on the tape, so the
//! tape order is a topological order and backward is a single reverse sweep.

use crate::element::{gemm, Element};
use crate::error::{KernelError, Result};
use crate::tensor::Tensor;

/// Handle to a node on a [`Graph`] tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
pub(crate) enum Op<T> {
    Leaf,
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    MatMul {
        a: Var,
        w: Var,
        trans_w: bool,
    },
    BatchMatMul {
        a: Var,
        b: Var,
        trans_b: bool,
    },
    SplitHeads {
        x: Var,
        batch: usize,
        seq: usize,
        heads: usize,
    },
    MergeHeads {
        x: Var,
        batch: usize,
        seq: usize,
        heads: usize,
    },
    Rope {
        x: Var,
        theta_base: f64,
    },
    CausalMask(Var),
    Softmax(Var),
    RmsNorm {
        x: Var,
        gain: Option<Var>,
        inv_rms: Vec<T>,
    },
    Silu(Var),
    Embedding {
        table: Var,
        ids: Vec<usize>,
    },
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
    },
    WeightedSum {
        x: Var,
        weights: Vec<T>,
    },
}

impl<T> Op<T> {
    pub(crate) fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::MatMul { .. } => "matmul",
            Op::BatchMatMul { .. } => "batch_matmul",
            Op::SplitHeads { .. } => "split_heads",
            Op::MergeHeads { .. } => "merge_heads",
            Op::Rope { .. } => "rope_rotate",
            Op::CausalMask(..) => "causal_mask_fill",
            Op::Softmax(..) => "softmax",
            Op::RmsNorm { .. } => "rms_norm",
            Op::Silu(..) => "silu",
            Op::Embedding { .. } => "embedding_lookup",
            Op::CrossEntropy { .. } => "cross_entropy",
            Op::WeightedSum { .. } => "weighted_sum",
        }
    }
}

pub(crate) struct Node<T> {
    pub(crate) value: Tensor<T>,
    pub(crate) op: Op<T>,
    pub(crate) requires_grad: bool,
}

/// A single forward pass recorded for reverse-mode differentiation.
///
/// A graph is built fresh for every forward pass and is owned by one thread.
pub struct Graph<T> {
    pub(crate) nodes: Vec<Node<T>>,
}

impl<T: Element> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn check_finite<T: Element>(op: &'static str, shapes: Vec<Vec<usize>>, data: &[T]) -> Result<()> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(KernelError::NonFinite { op, shapes })
    }
}

fn mismatch(op: &'static str, shapes: &[&[usize]]) -> KernelError {
    KernelError::ShapeMismatch {
        op,
        shapes: shapes.iter().map(|s| s.to_vec()).collect(),
    }
}

/// Per-position rotation angles for one rotary pair index.
pub(crate) fn rope_angle(pos: usize, pair: usize, dim: usize, theta_base: f64) -> (f64, f64) {
    let freq = theta_base.powf(-2.0 * pair as f64 / dim as f64);
    let angle = pos as f64 * freq;
    (angle.cos(), angle.sin())
}

impl<T: Element> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push_checked(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Result<Var> {
        let shapes = || inputs.iter().map(|v| self.shape(*v).to_vec()).collect();
        check_finite(op.name(), shapes(), value.data())?;
        let rg = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        Ok(self.push(value, op, rg))
    }

    /// Trainable leaf: gradients are accumulated for it.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Constant leaf: no gradient flows into it.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(mismatch("add", &[ta.shape(), tb.shape()]));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| x + y).collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        self.push_checked(out, Op::Add(a, b), &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(mismatch("mul", &[ta.shape(), tb.shape()]));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| x * y).collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        self.push_checked(out, Op::Mul(a, b), &[a, b])
    }

    /// Multiply by a constant (not differentiated with respect to `c`).
    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let k = T::cast_from(c);
        let out = self.value(a).map(|x| x * k);
        self.push_checked(out, Op::Scale(a, c), &[a])
    }

    /// `[..., k] x [k, n] -> [..., n]`.
    pub fn matmul(&mut self, a: Var, w: Var) -> Result<Var> {
        self.matmul_impl(a, w, false)
    }

    /// `[..., k] x [n, k]^T -> [..., n]`, e.g. a head tied to an embedding table.
    pub fn matmul_t(&mut self, a: Var, w: Var) -> Result<Var> {
        self.matmul_impl(a, w, true)
    }

    fn matmul_impl(&mut self, a: Var, w: Var, trans_w: bool) -> Result<Var> {
        let (ta, tw) = (self.value(a), self.value(w));
        if tw.rank() != 2 || ta.rank() == 0 {
            return Err(mismatch("matmul", &[ta.shape(), tw.shape()]));
        }
        let (k, n) = if trans_w {
            (tw.shape()[1], tw.shape()[0])
        } else {
            (tw.shape()[0], tw.shape()[1])
        };
        if ta.last_dim() != k {
            return Err(mismatch("matmul", &[ta.shape(), tw.shape()]));
        }
        let m = ta.rows();
        let mut data = vec![T::zero(); m * n];
        gemm(false, trans_w, m, k, n, ta.data(), tw.data(), &mut data, false);
        let mut shape = ta.shape().to_vec();
        *shape.last_mut().unwrap() = n;
        let out = Tensor::new(shape, data)?;
        self.push_checked(out, Op::MatMul { a, w, trans_w }, &[a, w])
    }

    /// Batched `[g, m, k] x [g, k, n]`, or `[g, m, k] x [g, n, k]^T` when
    /// `trans_b` is set.
    pub fn batch_matmul(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 3 || tb.rank() != 3 || ta.shape()[0] != tb.shape()[0] {
            return Err(mismatch("batch_matmul", &[ta.shape(), tb.shape()]));
        }
        let (g, m, k) = (ta.shape()[0], ta.shape()[1], ta.shape()[2]);
        let (kb, n) = if trans_b {
            (tb.shape()[2], tb.shape()[1])
        } else {
            (tb.shape()[1], tb.shape()[2])
        };
        if kb != k {
            return Err(mismatch("batch_matmul", &[ta.shape(), tb.shape()]));
        }
        let mut data = vec![T::zero(); g * m * n];
        for gi in 0..g {
            gemm(
                false,
                trans_b,
                m,
                k,
                n,
                &ta.data()[gi * m * k..(gi + 1) * m * k],
                &tb.data()[gi * k * n..(gi + 1) * k * n],
                &mut data[gi * m * n..(gi + 1) * m * n],
                false,
            );
        }
        let out = Tensor::new(vec![g, m, n], data)?;
        self.push_checked(out, Op::BatchMatMul { a, b, trans_b }, &[a, b])
    }

    /// `[batch * seq, heads * dh] -> [batch * heads, seq, dh]`.
    pub fn split_heads(&mut self, x: Var, batch: usize, seq: usize, heads: usize) -> Result<Var> {
        let tx = self.value(x);
        let width = tx.last_dim();
        if heads == 0 || width % heads != 0 || tx.numel() != batch * seq * width {
            return Err(mismatch("split_heads", &[tx.shape(), &[batch, seq, heads]]));
        }
        let dh = width / heads;
        let src = tx.data();
        let mut data = vec![T::zero(); src.len()];
        for b in 0..batch {
            for s in 0..seq {
                for h in 0..heads {
                    let from = (b * seq + s) * width + h * dh;
                    let to = ((b * heads + h) * seq + s) * dh;
                    data[to..to + dh].copy_from_slice(&src[from..from + dh]);
                }
            }
        }
        let out = Tensor::new(vec![batch * heads, seq, dh], data)?;
        self.push_checked(
            out,
            Op::SplitHeads {
                x,
                batch,
                seq,
                heads,
            },
            &[x],
        )
    }

    /// Inverse of [`Graph::split_heads`]: `[batch * heads, seq, dh] -> [batch * seq, heads * dh]`.
    pub fn merge_heads(&mut self, x: Var, batch: usize, seq: usize, heads: usize) -> Result<Var> {
        let tx = self.value(x);
        if tx.rank() != 3 || tx.shape()[0] != batch * heads || tx.shape()[1] != seq {
            return Err(mismatch("merge_heads", &[tx.shape(), &[batch, seq, heads]]));
        }
        let dh = tx.shape()[2];
        let width = heads * dh;
        let src = tx.data();
        let mut data = vec![T::zero(); src.len()];
        for b in 0..batch {
            for s in 0..seq {
                for h in 0..heads {
                    let to = (b * seq + s) * width + h * dh;
                    let from = ((b * heads + h) * seq + s) * dh;
                    data[to..to + dh].copy_from_slice(&src[from..from + dh]);
                }
            }
        }
        let out = Tensor::new(vec![batch * seq, width], data)?;
        self.push_checked(
            out,
            Op::MergeHeads {
                x,
                batch,
                seq,
                heads,
            },
            &[x],
        )
    }

    /// Rotary position embedding over `[g, seq, dh]`, rotating contiguous
    /// pairs `(2i, 2i+1)` by `pos * theta_base^(-2i/dh)`; positions are `0..seq`.
    pub fn rope_rotate(&mut self, x: Var, theta_base: f64) -> Result<Var> {
        let tx = self.value(x);
        if tx.rank() != 3 || tx.shape()[2] % 2 != 0 {
            return Err(mismatch("rope_rotate", &[tx.shape()]));
        }
        if theta_base <= 0.0 {
            return Err(KernelError::InvalidArgument {
                op: "rope_rotate",
                reason: format!("theta_base must be positive, got {theta_base}"),
            });
        }
        let (g, seq, dh) = (tx.shape()[0], tx.shape()[1], tx.shape()[2]);
        let table = rope_table::<T>(seq, dh, theta_base);
        let src = tx.data();
        let mut data = vec![T::zero(); src.len()];
        for gi in 0..g {
            for s in 0..seq {
                let base = (gi * seq + s) * dh;
                for p in 0..dh / 2 {
                    let (c, sn) = table[s * (dh / 2) + p];
                    let x0 = src[base + 2 * p];
                    let x1 = src[base + 2 * p + 1];
                    data[base + 2 * p] = x0 * c - x1 * sn;
                    data[base + 2 * p + 1] = x0 * sn + x1 * c;
                }
            }
        }
        let out = Tensor::new(vec![g, seq, dh], data)?;
        self.push_checked(out, Op::Rope { x, theta_base }, &[x])
    }

    /// Fill strictly-upper entries of every `[seq, seq]` score matrix with `-inf`.
    pub fn causal_mask_fill(&mut self, x: Var) -> Result<Var> {
        let tx = self.value(x);
        if tx.rank() != 3 || tx.shape()[1] != tx.shape()[2] {
            return Err(mismatch("causal_mask_fill", &[tx.shape()]));
        }
        let seq = tx.shape()[1];
        let mut out = tx.clone();
        for (idx, v) in out.data_mut().iter_mut().enumerate() {
            let i = (idx / seq) % seq;
            let j = idx % seq;
            if j > i {
                *v = T::neg_infinity();
            } else if !v.is_finite() {
                return Err(KernelError::NonFinite {
                    op: "causal_mask_fill",
                    shapes: vec![tx.shape().to_vec()],
                });
            }
        }
        let rg = self.requires_grad(x);
        Ok(self.push(out, Op::CausalMask(x), rg))
    }

    /// Softmax over the last axis; `-inf` inputs map to exactly zero.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let tx = self.value(x);
        let d = tx.last_dim();
        let mut data = tx.data().to_vec();
        for row in data.chunks_exact_mut(d) {
            softmax_row(row);
        }
        let out = Tensor::new(tx.shape().to_vec(), data)?;
        self.push_checked(out, Op::Softmax(x), &[x])
    }

    /// `x / sqrt(mean(x^2) + eps) * gain` over the last axis.
    pub fn rms_norm(&mut self, x: Var, gain: Option<Var>, eps: f64) -> Result<Var> {
        if !(eps >= 0.0) {
            return Err(KernelError::InvalidArgument {
                op: "rms_norm",
                reason: format!("eps must be non-negative, got {eps}"),
            });
        }
        let tx = self.value(x);
        let d = tx.last_dim();
        let gain_data = match gain {
            Some(gv) => {
                let tg = self.value(gv);
                if tg.shape() != [d] {
                    return Err(mismatch("rms_norm", &[tx.shape(), tg.shape()]));
                }
                Some(tg.data())
            }
            None => None,
        };
        let mut data = vec![T::zero(); tx.numel()];
        let mut inv_rms = Vec::with_capacity(tx.rows());
        for (row, out) in tx.data().chunks_exact(d).zip(data.chunks_exact_mut(d)) {
            let ms = row.iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>() / d as f64;
            let r = T::cast_from(1.0 / (ms + eps).sqrt());
            inv_rms.push(r);
            match gain_data {
                Some(g) => {
                    for ((o, &v), &w) in out.iter_mut().zip(row).zip(g) {
                        *o = v * r * w;
                    }
                }
                None => {
                    for (o, &v) in out.iter_mut().zip(row) {
                        *o = v * r;
                    }
                }
            }
        }
        let out = Tensor::new(tx.shape().to_vec(), data)?;
        let mut inputs = vec![x];
        inputs.extend(gain);
        self.push_checked(out, Op::RmsNorm { x, gain, inv_rms }, &inputs)
    }

    pub fn silu(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).map(|v| v * sigmoid(v));
        self.push_checked(out, Op::Silu(x), &[x])
    }

    /// Gather rows of `table` (`[vocab, d]`) → `[ids.len(), d]`.
    pub fn embedding_lookup(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let tt = self.value(table);
        if tt.rank() != 2 || ids.is_empty() {
            return Err(mismatch("embedding_lookup", &[tt.shape(), &[ids.len()]]));
        }
        let (vocab, d) = (tt.shape()[0], tt.shape()[1]);
        if let Some(&bad) = ids.iter().find(|&&i| i >= vocab) {
            return Err(KernelError::InvalidArgument {
                op: "embedding_lookup",
                reason: format!("token id {bad} >= vocab {vocab}"),
            });
        }
        let mut data = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            data.extend_from_slice(tt.row(i));
        }
        let out = Tensor::new(vec![ids.len(), d], data)?;
        self.push_checked(
            out,
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
            &[table],
        )
    }

    /// Mean next-token negative log-likelihood of `targets` under `logits` (`[n, vocab]`).
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let tl = self.value(logits);
        let v = tl.last_dim();
        if tl.rows() != targets.len() || targets.is_empty() {
            return Err(mismatch("cross_entropy", &[tl.shape(), &[targets.len()]]));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= v) {
            return Err(KernelError::InvalidArgument {
                op: "cross_entropy",
                reason: format!("target {bad} >= classes {v}"),
            });
        }
        let mut total = 0.0f64;
        for (row, &t) in tl.data().chunks_exact(v).zip(targets) {
            total += log_sum_exp(row) - row[t].as_f64();
        }
        let loss = total / targets.len() as f64;
        let out = Tensor::scalar(T::cast_from(loss));
        self.push_checked(
            out,
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
            },
            &[logits],
        )
    }

    /// `sum(x * weights)` with constant weights; a scalar probe for gradient checks.
    pub fn weighted_sum(&mut self, x: Var, weights: &Tensor<T>) -> Result<Var> {
        let tx = self.value(x);
        if tx.shape() != weights.shape() {
            return Err(mismatch("weighted_sum", &[tx.shape(), weights.shape()]));
        }
        let s: f64 = tx
            .data()
            .iter()
            .zip(weights.data())
            .map(|(a, b)| a.as_f64() * b.as_f64())
            .sum();
        let out = Tensor::scalar(T::cast_from(s));
        self.push_checked(
            out,
            Op::WeightedSum {
                x,
                weights: weights.data().to_vec(),
            },
            &[x],
        )
    }
}

pub(crate) fn rope_table<T: Element>(seq: usize, dh: usize, theta_base: f64) -> Vec<(T, T)> {
    let half = dh / 2;
    let mut table = Vec::with_capacity(seq * half);
    for s in 0..seq {
        for p in 0..half {
            let (c, sn) = rope_angle(s, p, dh, theta_base);
            table.push((T::cast_from(c), T::cast_from(sn)));
        }
    }
    table
}

pub(crate) fn sigmoid<T: Element>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}

pub(crate) fn softmax_row<T: Element>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum = sum + *v;
    }
    for v in row.iter_mut() {
        *v = *v / sum;
    }
}

pub(crate) fn log_sum_exp<T: Element>(row: &[T]) -> f64 {
    let max = row.iter().map(|v| v.as_f64()).fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = row.iter().map(|v| (v.as_f64() - max).exp()).sum();
    max + s.ln()
}
