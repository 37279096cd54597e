//! Analysis instruments: spike score, per-layer activation norms, residual
//! evolution across checkpoints, and depth / schedule sweeps.

mod spike;
mod sweep;

use prores_tensor::{Element, Tensor};

pub use spike::{spike_flags, spike_score, SpikeConfig};
pub use sweep::{depth_sweep, schedule_sweep, sweep, Method, SweepCell, SweepRow, SweepTable};

use crate::data::Batch;
use crate::model::{AlphaMode, Model};
use crate::report::{sig6, Csv};
use crate::training::Checkpoint;
use crate::Error;

/// Mean over tokens of the L2 norm of each residual state: the embedding
/// output followed by every block output (`L + 1` values).
pub fn activation_norms<T: Element>(model: &Model<T>, probe: &Batch, mode: AlphaMode) -> Result<Vec<f64>, Error> {
    let acts = model.activations(&probe.inputs, probe.batch_size, mode)?;
    Ok(acts.states.iter().map(mean_row_norm).collect())
}

fn mean_row_norm<T: Element>(t: &Tensor<T>) -> f64 {
    let d = t.last_dim();
    let rows = t.data().chunks(d);
    let n = rows.len() as f64;
    rows.map(|r| r.iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>().sqrt()).sum::<f64>() / n
}

/// Cosine similarity of two vectors; two zero vectors count as identical
/// and a single zero vector as orthogonal.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    match (na == 0.0, nb == 0.0) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        _ => (dot / (na * nb)).clamp(-1.0, 1.0),
    }
}

/// Mean over rows of the row-wise cosine similarity of two `[N, d]` tensors.
pub fn mean_row_cosine<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64, Error> {
    if a.shape() != b.shape() {
        return Err(Error::Data(format!(
            "probe mismatch: shapes {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let d = a.last_dim();
    let to64 = |r: &[T]| r.iter().map(|v| v.as_f64()).collect::<Vec<_>>();
    let rows = a.rows();
    let total: f64 = a
        .data()
        .chunks(d)
        .zip(b.data().chunks(d))
        .map(|(x, y)| cosine(&to64(x), &to64(y)))
        .sum();
    Ok(total / rows as f64)
}

/// Similarity of each block's residual branches to the final checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct ReprEvolution {
    pub steps: Vec<u64>,
    /// `values[checkpoint][block]`, each in `[-1, 1]`.
    pub values: Vec<Vec<f64>>,
    /// Identifies the probe tokens.
    pub probe_id: String,
}

impl ReprEvolution {
    pub fn to_csv(&self) -> String {
        let layers = self.values.first().map_or(0, Vec::len);
        let mut csv = Csv::new(std::iter::once("step".to_string()).chain((1..=layers).map(|l| format!("l{l}"))));
        for (s, row) in self.steps.iter().zip(&self.values) {
            csv.push(std::iter::once(s.to_string()).chain(row.iter().map(|&v| sig6(v))).collect());
        }
        csv.render()
    }
}

/// Stable identifier of a probe batch: FNV-1a over its token ids.
pub fn probe_id(probe: &Batch) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &t in probe.inputs.iter().chain(&probe.targets) {
        h ^= t as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    format!("{h:016x}")
}

/// For every checkpoint and block, the mean over probe tokens of the cosine
/// between its branch outputs and the final checkpoint's, averaged over the
/// attention and FFN sublayers. Each forward uses its checkpoint's own step.
pub fn residual_evolution<T: Element>(
    checkpoints: &[Checkpoint<T>],
    final_checkpoint: &Checkpoint<T>,
    probe: &Batch,
) -> Result<ReprEvolution, Error> {
    let fin_model = final_checkpoint.model()?;
    let fin = fin_model.activations(&probe.inputs, probe.batch_size, AlphaMode::Step(final_checkpoint.step))?;
    let layers = fin_model.config.layers;
    let mut steps = Vec::new();
    let mut values = Vec::new();
    for ck in checkpoints {
        let m = ck.model()?;
        if m.config.layers != layers || m.config.d_model != fin_model.config.d_model {
            return Err(Error::Data(format!(
                "checkpoint at step {} has a different shape from the final checkpoint",
                ck.step
            )));
        }
        let a = m.activations(&probe.inputs, probe.batch_size, AlphaMode::Step(ck.step))?;
        let mut row = Vec::with_capacity(layers);
        for l in 0..layers {
            let attn = mean_row_cosine(&a.branches[2 * l], &fin.branches[2 * l])?;
            let ffn = mean_row_cosine(&a.branches[2 * l + 1], &fin.branches[2 * l + 1])?;
            row.push(0.5 * (attn + ffn));
        }
        steps.push(ck.step);
        values.push(row);
    }
    Ok(ReprEvolution {
        steps,
        values,
        probe_id: probe_id(probe),
    })
}

/// `step,l0..lL` rows of activation norms.
pub fn norms_csv(rows: &[(u64, Vec<f64>)]) -> String {
    let width = rows.first().map_or(0, |r| r.1.len());
    let mut csv = Csv::new(std::iter::once("step".to_string()).chain((0..width).map(|l| format!("l{l}"))));
    for (s, v) in rows {
        csv.push(std::iter::once(s.to_string()).chain(v.iter().map(|&x| sig6(x))).collect());
    }
    csv.render()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, VariantKind};
    use crate::schedules::ScheduleFamily;
    use crate::training::TrainConfig;

    fn probe(n: usize, seq: usize) -> Batch {
        let inputs: Vec<usize> = (0..n * seq).map(|i| (i * 11 + 5) % 32).collect();
        Batch {
            batch_size: n,
            seq_len: seq,
            indices: (0..n).collect(),
            targets: inputs.clone(),
            inputs,
        }
    }

    #[test]
    fn cosine_edge_cases() {
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 3.0]), 0.0);
        assert!((cosine(&[1.0, 2.0], &[2.0, 4.0]) - 1.0).abs() < 1e-15);
        assert_eq!(cosine(&[0.0, 0.0], &[0.0, 0.0]), 1.0);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]), 0.0);
        assert!((cosine(&[1.0, 1.0], &[-1.0, -1.0]) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn norms_are_flat_at_step_zero_under_warmup() {
        let cfg = ModelConfig::tiny(4).with_schedule(ScheduleFamily::Linear, 100).unwrap();
        let m = Model::<f32>::init(cfg).unwrap();
        let n = activation_norms(&m, &probe(2, 8), AlphaMode::Step(0)).unwrap();
        assert_eq!(n.len(), 5);
        assert!(n.iter().all(|&v| v == n[0]));
        let grown = activation_norms(&m, &probe(2, 8), AlphaMode::Step(10_000)).unwrap();
        let none = activation_norms(&m, &probe(2, 8), AlphaMode::Fixed(1.0)).unwrap();
        assert_eq!(grown, none);
    }

    #[test]
    fn self_evolution_is_one() {
        let tc = TrainConfig {
            model: ModelConfig::tiny(2).with_variant(VariantKind::PreLn),
            ..TrainConfig::default()
        };
        let m = Model::<f64>::init(tc.model.clone()).unwrap();
        let ck = Checkpoint {
            step: 5,
            config: tc,
            params: m.params,
            optim: None,
        };
        let e = residual_evolution(std::slice::from_ref(&ck), &ck, &probe(2, 8)).unwrap();
        assert_eq!(e.values.len(), 1);
        assert!(e.values[0].iter().all(|v| (v - 1.0).abs() < 1e-6));
        assert!(e.to_csv().starts_with("step,l1,l2\n5,1.00000"));
    }
}
