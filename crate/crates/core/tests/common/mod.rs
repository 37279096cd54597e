//! Oracles shared by the integration tests and the acceptance report.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use prores::model::{AlphaMode, Model, ModelConfig, VariantKind};
use prores::schedules::ScheduleFamily;

/// Mean and population deviation of each window from scratch, one index at a time.
pub fn oracle_flags(s: &[f64], window: usize, k: f64, phase: (f64, f64)) -> Vec<bool> {
    let n = s.len();
    let lo = ((phase.0 * n as f64).ceil() as usize).max(window);
    let hi = ((phase.1 * n as f64).ceil() as usize).min(n);
    let mut out = Vec::new();
    for i in lo..hi {
        let w = &s[i - window..i];
        let mean = w.iter().sum::<f64>() / window as f64;
        let var = w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / window as f64;
        let sd = var.sqrt();
        out.push(if sd == 0.0 { s[i] != mean } else { (s[i] - mean).abs() >= k * sd });
    }
    out
}

pub fn synthetic_series() -> Vec<(String, Vec<f64>)> {
    let mut out = Vec::new();
    for (j, c) in [0.0, 1.0, -2.5, 3.25, 1e6, 5.545].into_iter().enumerate() {
        out.push((format!("constant-{j}"), vec![c; 3000]));
    }
    for seed in 0..8u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sd = 0.1 * (seed + 1) as f64;
        let noise = Normal::new(3.0, sd).unwrap();
        let base: Vec<f64> = (0..3000).map(|_| noise.sample(&mut rng)).collect();
        out.push((format!("noise-{seed}"), base.clone()));
        let mut jumpy = base;
        for p in [1200 + 37 * seed as usize, 1900, 2400 + seed as usize] {
            jumpy[p] += 10.0 * sd;
        }
        out.push((format!("jumps-{seed}"), jumpy));
    }
    let mut decay: Vec<f64> = (0..3000).map(|i| 5.0 * (-(i as f64) / 800.0).exp() + 2.0).collect();
    decay[2000] += 1.0;
    out.push(("decay-with-spike".into(), decay));
    out
}

pub const PROBES: usize = 120;
pub const H: f64 = 1e-5;
pub const TOL: f64 = 1e-4;
/// Gradients below this magnitude are compared absolutely.
pub const FLOOR: f64 = 1e-7;

pub fn batch(seed: u64, n: usize, vocab: usize) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = (0..n).map(|_| rng.random_range(0..vocab)).collect();
    let b = (0..n).map(|_| rng.random_range(0..vocab)).collect();
    (a, b)
}

/// Worst relative error over `PROBES` random coordinates.
pub fn worst_error(kind: VariantKind, mode: AlphaMode) -> f64 {
    let cfg = ModelConfig::tiny(2)
        .with_variant(kind)
        .with_schedule(ScheduleFamily::Linear, 10)
        .unwrap();
    assert_eq!(cfg.d_model, 16);
    // Larger weights keep attention-score gradients far above rounding noise.
    let mut cfg = cfg;
    cfg.init.base_std = 0.3;
    let mut model = Model::<f64>::init(cfg).unwrap();
    // Perturb gains away from 1 so their gradients are generic.
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for e in model.params.iter_mut() {
        for v in e.tensor.data_mut() {
            *v += rng.random_range(-0.05..0.05);
        }
    }
    let (inputs, targets) = batch(3, 2 * 8, 32);
    let (_, grads) = model.loss_and_grads(&inputs, &targets, 2, mode).unwrap();
    let mut worst: f64 = 0.0;
    for p in 0..PROBES {
        let pi = p % model.params.len();
        let n = model.params.entry(pi).tensor.data().len();
        let i = rng.random_range(0..n);
        let name = model.params.entry(pi).name.clone();
        let orig = model.params.get(&name).unwrap().data()[i];
        let mut at = |v: f64| {
            model.params.get_mut(&name).unwrap().data_mut()[i] = v;
            model.loss(&inputs, &targets, 2, mode).unwrap()
        };
        let numeric = (at(orig + H) - at(orig - H)) / (2.0 * H);
        at(orig);
        let analytic = grads[pi].data()[i];
        let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR);
        worst = worst.max(err);
    }
    worst
}

