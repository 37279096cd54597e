//! Dense tensors and reverse-mode automatic differentiation.
//!
//! The kernel is deliberately small: row-major contiguous storage, a tape
//! ([`Graph`]) that records one forward pass, and exactly the primitives a
//! Llama-style decoder block needs (matmul, RMSNorm, SiLU, RoPE, causal
//! softmax attention, embedding lookup and cross-entropy).
//!
//! Every forward op checks its output for non-finite values and reports the
//! op name and input shapes on overflow. Execution is single-threaded and
//! deterministic.

// `!(x >= 0.0)` rejects NaN as well; keep it.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::manual_is_multiple_of)]

mod backward;
mod denormal;
mod element;
mod error;
mod graph;
mod tensor;

pub use backward::Gradients;
pub use denormal::FlushDenormals;
pub use element::{gemm, DType, Element};
pub use error::{KernelError, Result};
pub use graph::{Graph, Var};
pub use tensor::Tensor;

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape, v).unwrap()
    }

    #[test]
    fn rms_norm_of_three_four() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(t(&[2], &[3.0, 4.0]));
        let w = g.constant(t(&[2], &[1.0, 1.0]));
        let y = g.rms_norm(x, Some(w), 0.0).unwrap();
        let out = g.value(y).data();
        // mean(x^2) = 12.5
        let r = 12.5f64.sqrt();
        assert!((out[0] - 3.0 / r).abs() < 1e-12);
        assert!((out[1] - 4.0 / r).abs() < 1e-12);
        assert!((out[0] - 0.848_528_137).abs() < 1e-8);
        assert!((out[1] - 1.131_370_849).abs() < 1e-8);
    }

    #[test]
    fn rms_norm_rejects_negative_eps() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(t(&[2], &[3.0, 4.0]));
        assert!(matches!(
            g.rms_norm(x, None, -1.0),
            Err(KernelError::InvalidArgument { .. })
        ));
    }

    #[test]
    fn rms_norm_of_zero_row_without_eps_overflows() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(t(&[1, 2], &[0.0, 0.0]));
        let err = g.rms_norm(x, None, 0.0).unwrap_err();
        assert!(matches!(err, KernelError::NonFinite { op: "rms_norm", .. }));
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let mut g = Graph::<f32>::new();
        let x = g.constant(Tensor::from_f64(&[2], &[0.0, 0.0]).unwrap());
        let y = g.softmax(x).unwrap();
        assert_eq!(g.value(y).data(), &[0.5, 0.5]);
    }

    #[test]
    fn cross_entropy_of_uniform_logits_is_log_vocab() {
        for vocab in [2usize, 7, 257] {
            let mut g = Graph::<f64>::new();
            let logits = g.constant(Tensor::full(&[3, vocab], 0.25));
            let loss = g.cross_entropy(logits, &[0, vocab - 1, vocab / 2]).unwrap();
            assert!((g.value(loss).item() - (vocab as f64).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn square_has_derivative_six_at_three() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::scalar(3.0));
        let y = g.mul(x, x).unwrap();
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.get(x).unwrap().item(), 6.0);
    }

    #[test]
    fn causal_mask_zeroes_future_attention() {
        let mut g = Graph::<f64>::new();
        let s = g.constant(Tensor::full(&[2, 3, 3], 0.7));
        let m = g.causal_mask_fill(s).unwrap();
        let p = g.softmax(m).unwrap();
        let p = g.value(p);
        for gi in 0..2 {
            for i in 0..3 {
                let row = &p.data()[(gi * 3 + i) * 3..(gi * 3 + i + 1) * 3];
                for (j, &w) in row.iter().enumerate() {
                    if j > i {
                        assert_eq!(w, 0.0);
                    } else {
                        assert!((w - 1.0 / (i + 1) as f64).abs() < 1e-15);
                    }
                }
            }
        }
    }

    #[test]
    fn shape_mismatch_is_reported_with_op_name() {
        let mut g = Graph::<f32>::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[3, 2]));
        match g.add(a, b) {
            Err(KernelError::ShapeMismatch { op, shapes }) => {
                assert_eq!(op, "add");
                assert_eq!(shapes, vec![vec![2, 3], vec![3, 2]]);
            }
            other => panic!("expected shape mismatch, got {other:?}"),
        }
    }

    #[test]
    fn overflow_reports_non_finite() {
        let mut g = Graph::<f32>::new();
        let a = g.constant(Tensor::full(&[2], 3.0e38));
        let err = g.add(a, a).unwrap_err();
        assert_eq!(
            err,
            KernelError::NonFinite {
                op: "add",
                shapes: vec![vec![2], vec![2]]
            }
        );
    }

    #[test]
    fn unreachable_leaf_has_no_gradient() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::scalar(1.0));
        let unused = g.param(Tensor::scalar(2.0));
        let y = g.scale(x, 2.0).unwrap();
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.get(x).unwrap().item(), 2.0);
        assert_eq!(grads.get(unused), Err(KernelError::MissingGradient(unused.index())));
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::zeros(&[2]));
        assert!(matches!(g.backward(x), Err(KernelError::NonScalarLoss(_))));
    }

    #[test]
    fn split_then_merge_heads_is_identity() {
        let (b, s, h, d) = (2, 3, 2, 4);
        let vals: Vec<f64> = (0..b * s * h * d).map(|i| i as f64).collect();
        let mut g = Graph::<f64>::new();
        let x = g.constant(t(&[b * s, h * d], &vals));
        let sp = g.split_heads(x, b, s, h).unwrap();
        assert_eq!(g.shape(sp), &[b * h, s, d]);
        // head 1 of batch 0 at position 2 starts at column 4 of row 2
        assert_eq!(g.value(sp).data()[(s + 2) * d], vals[2 * h * d + d]);
        let m = g.merge_heads(sp, b, s, h).unwrap();
        assert_eq!(g.value(m).data(), &vals[..]);
    }

    #[test]
    fn rope_leaves_position_zero_unchanged_and_preserves_norm() {
        let vals: Vec<f64> = (0..2 * 3 * 4).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut g = Graph::<f64>::new();
        let x = g.constant(t(&[2, 3, 4], &vals));
        let y = g.rope_rotate(x, 10_000.0).unwrap();
        let out = g.value(y).data();
        assert_eq!(&out[..4], &vals[..4]);
        for pair in 0..out.len() / 2 {
            let a = vals[2 * pair].hypot(vals[2 * pair + 1]);
            let b = out[2 * pair].hypot(out[2 * pair + 1]);
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let run = || {
            let mut g = Graph::<f32>::new();
            let x = g.param(Tensor::from_f64(&[4, 8], &(0..32).map(|i| (i as f64).cos()).collect::<Vec<_>>()).unwrap());
            let w = g.param(Tensor::from_f64(&[8, 5], &(0..40).map(|i| (i as f64 * 0.1).sin()).collect::<Vec<_>>()).unwrap());
            let y = g.matmul(x, w).unwrap();
            let y = g.silu(y).unwrap();
            let loss = g.cross_entropy(y, &[0, 1, 2, 3]).unwrap();
            let grads = g.backward(loss).unwrap();
            (g.value(loss).clone(), grads.get(w).unwrap(), grads.get(x).unwrap())
        };
        assert_eq!(run(), run());
    }
}
