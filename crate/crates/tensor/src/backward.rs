use crate::element::{gemm, Element};
use crate::error::{KernelError, Result};
use crate::graph::{rope_table, sigmoid, softmax_row, Graph, Node, Op, Var};
use crate::tensor::Tensor;

/// Gradients of a scalar loss with respect to every trainable leaf.
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
    shapes: Vec<Vec<usize>>,
}

impl<T: Element> Gradients<T> {
    /// Gradient for a leaf. Errors when no gradient path reached it.
    pub fn get(&self, v: Var) -> Result<Tensor<T>> {
        match self.grads.get(v.index()).and_then(|g| g.as_ref()) {
            Some(g) => Tensor::new(self.shapes[v.index()].clone(), g.clone()),
            None => Err(KernelError::MissingGradient(v.index())),
        }
    }

    /// Move the gradient out, leaving nothing behind.
    pub fn take(&mut self, v: Var) -> Result<Tensor<T>> {
        match self.grads.get_mut(v.index()).and_then(Option::take) {
            Some(g) => Tensor::new(self.shapes[v.index()].clone(), g),
            None => Err(KernelError::MissingGradient(v.index())),
        }
    }
}

fn slot<'a, T: Element>(
    grads: &'a mut [Option<Vec<T>>],
    nodes: &[Node<T>],
    v: Var,
) -> Option<&'a mut Vec<T>> {
    let node = &nodes[v.index()];
    if !node.requires_grad {
        return None;
    }
    Some(grads[v.index()].get_or_insert_with(|| vec![T::zero(); node.value.numel()]))
}

impl<T: Element> Graph<T> {
    /// Reverse sweep from a single-element `loss`, visiting every node once.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let loss_value = self.value(loss);
        if loss_value.numel() != 1 {
            return Err(KernelError::NonScalarLoss(loss_value.shape().to_vec()));
        }
        let nodes = &self.nodes[..=loss.index()];
        let mut grads: Vec<Option<Vec<T>>> = vec![None; nodes.len()];
        if nodes[loss.index()].requires_grad {
            grads[loss.index()] = Some(vec![T::one()]);
        }

        for i in (0..nodes.len()).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &nodes[i];
            match &node.op {
                Op::Leaf => {
                    grads[i] = Some(g);
                }
                Op::Add(a, b) => {
                    for v in [*a, *b] {
                        if let Some(s) = slot(&mut grads, nodes, v) {
                            s.iter_mut().zip(&g).for_each(|(s, &g)| *s = *s + g);
                        }
                    }
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (nodes[a.index()].value.data(), nodes[b.index()].value.data());
                    if let Some(s) = slot(&mut grads, nodes, *a) {
                        for ((s, &g), &y) in s.iter_mut().zip(&g).zip(vb) {
                            *s = *s + g * y;
                        }
                    }
                    if let Some(s) = slot(&mut grads, nodes, *b) {
                        for ((s, &g), &x) in s.iter_mut().zip(&g).zip(va) {
                            *s = *s + g * x;
                        }
                    }
                }
                Op::Scale(a, c) => {
                    let k = T::cast_from(*c);
                    if let Some(s) = slot(&mut grads, nodes, *a) {
                        s.iter_mut().zip(&g).for_each(|(s, &g)| *s = *s + g * k);
                    }
                }
                Op::MatMul { a, w, trans_w } => {
                    let (ta, tw) = (&nodes[a.index()].value, &nodes[w.index()].value);
                    let m = ta.rows();
                    let k = ta.last_dim();
                    let n = node.value.last_dim();
                    if let Some(s) = slot(&mut grads, nodes, *a) {
                        gemm(false, !*trans_w, m, n, k, &g, tw.data(), s, true);
                    }
                    if let Some(s) = slot(&mut grads, nodes, *w) {
                        if *trans_w {
                            gemm(true, false, n, m, k, &g, ta.data(), s, true);
                        } else {
                            gemm(true, false, k, m, n, ta.data(), &g, s, true);
                        }
                    }
                }
                Op::BatchMatMul { a, b, trans_b } => {
                    let (ta, tb) = (&nodes[a.index()].value, &nodes[b.index()].value);
                    let (groups, m, k) = (ta.shape()[0], ta.shape()[1], ta.shape()[2]);
                    let n = node.value.shape()[2];
                    let (sa, sb, sc) = (m * k, k * n, m * n);
                    if let Some(s) = slot(&mut grads, nodes, *a) {
                        for gi in 0..groups {
                            let gc = &g[gi * sc..(gi + 1) * sc];
                            let bb = &tb.data()[gi * sb..(gi + 1) * sb];
                            let out = &mut s[gi * sa..(gi + 1) * sa];
                            // trans_b: gA = gC * B (B stored n x k); else gA = gC * B^T.
                            gemm(false, !*trans_b, m, n, k, gc, bb, out, true);
                        }
                    }
                    if let Some(s) = slot(&mut grads, nodes, *b) {
                        for gi in 0..groups {
                            let gc = &g[gi * sc..(gi + 1) * sc];
                            let aa = &ta.data()[gi * sa..(gi + 1) * sa];
                            let out = &mut s[gi * sb..(gi + 1) * sb];
                            if *trans_b {
                                gemm(true, false, n, m, k, gc, aa, out, true);
                            } else {
                                gemm(true, false, k, m, n, aa, gc, out, true);
                            }
                        }
                    }
                }
                Op::SplitHeads {
                    x,
                    batch,
                    seq,
                    heads,
                } => {
                    if let Some(s) = slot(&mut grads, nodes, *x) {
                        let dh = node.value.shape()[2];
                        let width = heads * dh;
                        for b in 0..*batch {
                            for t in 0..*seq {
                                for h in 0..*heads {
                                    let to = (b * seq + t) * width + h * dh;
                                    let from = ((b * heads + h) * seq + t) * dh;
                                    for j in 0..dh {
                                        s[to + j] = s[to + j] + g[from + j];
                                    }
                                }
                            }
                        }
                    }
                }
                Op::MergeHeads {
                    x,
                    batch,
                    seq,
                    heads,
                } => {
                    if let Some(s) = slot(&mut grads, nodes, *x) {
                        let dh = nodes[x.index()].value.shape()[2];
                        let width = heads * dh;
                        for b in 0..*batch {
                            for t in 0..*seq {
                                for h in 0..*heads {
                                    let from = (b * seq + t) * width + h * dh;
                                    let to = ((b * heads + h) * seq + t) * dh;
                                    for j in 0..dh {
                                        s[to + j] = s[to + j] + g[from + j];
                                    }
                                }
                            }
                        }
                    }
                }
                Op::Rope { x, theta_base } => {
                    if let Some(s) = slot(&mut grads, nodes, *x) {
                        let shape = node.value.shape();
                        let (groups, seq, dh) = (shape[0], shape[1], shape[2]);
                        let table = rope_table::<T>(seq, dh, *theta_base);
                        for gi in 0..groups {
                            for t in 0..seq {
                                let base = (gi * seq + t) * dh;
                                for p in 0..dh / 2 {
                                    let (c, sn) = table[t * (dh / 2) + p];
                                    let g0 = g[base + 2 * p];
                                    let g1 = g[base + 2 * p + 1];
                                    s[base + 2 * p] = s[base + 2 * p] + g0 * c + g1 * sn;
                                    s[base + 2 * p + 1] = s[base + 2 * p + 1] - g0 * sn + g1 * c;
                                }
                            }
                        }
                    }
                }
                Op::CausalMask(x) => {
                    if let Some(s) = slot(&mut grads, nodes, *x) {
                        let seq = node.value.shape()[1];
                        for (idx, (s, &g)) in s.iter_mut().zip(&g).enumerate() {
                            if idx % seq <= (idx / seq) % seq {
                                *s = *s + g;
                            }
                        }
                    }
                }
                Op::Softmax(x) => {
                    if let Some(s) = slot(&mut grads, nodes, *x) {
                        let d = node.value.last_dim();
                        let y = node.value.data();
                        for ((sr, gr), yr) in s
                            .chunks_exact_mut(d)
                            .zip(g.chunks_exact(d))
                            .zip(y.chunks_exact(d))
                        {
                            let dot: f64 = gr
                                .iter()
                                .zip(yr)
                                .map(|(a, b)| a.as_f64() * b.as_f64())
                                .sum();
                            let dot = T::cast_from(dot);
                            for ((s, &g), &y) in sr.iter_mut().zip(gr).zip(yr) {
                                *s = *s + y * (g - dot);
                            }
                        }
                    }
                }
                Op::RmsNorm { x, gain, inv_rms } => {
                    let tx = &nodes[x.index()].value;
                    let d = tx.last_dim();
                    let gain_data = gain.map(|gv| nodes[gv.index()].value.data());
                    let w = |j: usize| gain_data.map_or(T::one(), |gd| gd[j]);
                    if let Some(s) = slot(&mut grads, nodes, *x) {
                        let inv_d = T::cast_from(1.0 / d as f64);
                        for (((sr, gr), xr), &r) in s
                            .chunks_exact_mut(d)
                            .zip(g.chunks_exact(d))
                            .zip(tx.data().chunks_exact(d))
                            .zip(inv_rms)
                        {
                            let dot: f64 = (0..d)
                                .map(|j| (w(j) * gr[j]).as_f64() * xr[j].as_f64())
                                .sum();
                            let coef = r * r * r * inv_d * T::cast_from(dot);
                            for j in 0..d {
                                sr[j] = sr[j] + r * w(j) * gr[j] - coef * xr[j];
                            }
                        }
                    }
                    if let Some(gv) = gain {
                        if let Some(s) = slot(&mut grads, nodes, *gv) {
                            for ((gr, xr), &r) in
                                g.chunks_exact(d).zip(tx.data().chunks_exact(d)).zip(inv_rms)
                            {
                                for j in 0..d {
                                    s[j] = s[j] + gr[j] * xr[j] * r;
                                }
                            }
                        }
                    }
                }
                Op::Silu(x) => {
                    if let Some(s) = slot(&mut grads, nodes, *x) {
                        let xv = nodes[x.index()].value.data();
                        for ((s, &g), &v) in s.iter_mut().zip(&g).zip(xv) {
                            let sg = sigmoid(v);
                            *s = *s + g * sg * (T::one() + v * (T::one() - sg));
                        }
                    }
                }
                Op::Embedding { table, ids } => {
                    if let Some(s) = slot(&mut grads, nodes, *table) {
                        let d = node.value.last_dim();
                        for (row, &id) in ids.iter().enumerate() {
                            let dst = &mut s[id * d..(id + 1) * d];
                            for (o, &v) in dst.iter_mut().zip(&g[row * d..(row + 1) * d]) {
                                *o = *o + v;
                            }
                        }
                    }
                }
                Op::CrossEntropy { logits, targets } => {
                    if let Some(s) = slot(&mut grads, nodes, *logits) {
                        let tl = &nodes[logits.index()].value;
                        let v = tl.last_dim();
                        let k = g[0] / T::cast_from(targets.len() as f64);
                        let mut p = vec![T::zero(); v];
                        for ((sr, lr), &t) in
                            s.chunks_exact_mut(v).zip(tl.data().chunks_exact(v)).zip(targets)
                        {
                            p.copy_from_slice(lr);
                            softmax_row(&mut p);
                            p[t] = p[t] - T::one();
                            for (o, &q) in sr.iter_mut().zip(&p) {
                                *o = *o + q * k;
                            }
                        }
                    }
                }
                Op::WeightedSum { x, weights } => {
                    if let Some(s) = slot(&mut grads, nodes, *x) {
                        for (o, &w) in s.iter_mut().zip(weights) {
                            *o = *o + g[0] * w;
                        }
                    }
                }
            }
        }

        let shapes = nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { grads, shapes })
    }
}
