//! Acceptance report: one PASS/FAIL line per criterion. Hard criteria fail
//! the target; soft ones are reported only.
//!
//! The stress runs train four 8-block models for 3000 steps each and take
//! roughly half an hour on one core. Their run directories are kept under
//! the cargo target directory for inspection.

use std::path::PathBuf;
use std::time::Instant;

use proptest::prelude::*;
use proptest::test_runner::{Config as RunnerConfig, TestCaseError, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use prores::diagnostics::{spike_flags, spike_score, SpikeConfig};
use prores::model::{AlphaMode, Model, ModelConfig, ParamKind, ParamSet, VariantKind};
use prores::optim::{adamw_step, clip_global, global_norm, lr_at, OptimConfig, OptimState};
use prores::schedules::{ScheduleFamily, ScheduleSpec};
use prores::tensor::Tensor;
use prores::training::{
    checkpoint_name, train, Checkpoint, RunStatus, TrainConfig, TrainData, TrainOptions, TrainOutcome,
};

mod common;

const LN_VOCAB: f64 = 5.549_076_084_895_08; // ln 257
const GRAD_TOL: f64 = 1e-4;
const CLIP_TOL: f64 = 1e-6;
const ADAM_TOL: f64 = 1e-12;
const EVAL_MARGIN: f64 = 0.02;
const PAIR_BUDGET_S: f64 = 3600.0;
const TRIO_BUDGET_S: f64 = 7200.0;

#[derive(Default)]
struct Report {
    hard_failures: Vec<String>,
}

impl Report {
    fn line(&mut self, id: &str, hard: bool, pass: bool, what: &str, detail: String) {
        let tag = if pass { "PASS" } else { "FAIL" };
        let kind = if hard { "hard" } else { "soft" };
        println!("[{tag}] {id} ({kind}) {what}: {detail}");
        if hard && !pass {
            self.hard_failures.push(id.to_string());
        }
    }
}

fn bits_equal(a: &Tensor<f32>, b: &Tensor<f32>) -> bool {
    a.shape() == b.shape() && a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits())
}

fn tokens(n: usize, vocab: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(0..vocab)).collect()
}

const ZERO_START: [ScheduleFamily; 6] = [
    ScheduleFamily::Linear,
    ScheduleFamily::LinearSqrt,
    ScheduleFamily::LinearSquare,
    ScheduleFamily::Equal,
    ScheduleFamily::Reverse,
    ScheduleFamily::Stagewise0,
];

fn schedule_algebra() -> Result<String, String> {
    let mut runner = TestRunner::new(RunnerConfig {
        failure_persistence: None,
        ..RunnerConfig::with_cases(4000)
    });
    let family = proptest::sample::select(ScheduleFamily::ALL.to_vec());
    let strat = (family, 1u64..5000, 1usize..64, 1usize..64, 0u64..400_000, 0u64..5000);
    runner
        .run(&strat, |(f, warmup, layers, l, t, dt)| {
            let l = l.min(layers);
            let s = ScheduleSpec::new(f, warmup, layers).map_err(|e| TestCaseError::fail(e.to_string()))?;
            let a = s.alpha(l, t).unwrap();
            prop_assert!((0.0..=1.0).contains(&a), "{} range {}", f, a);
            prop_assert!(a <= s.alpha(l, t + dt).unwrap(), "{} not monotone", f);
            if let Some(end) = s.warmup_length() {
                prop_assert!(s.alphas(end + dt).iter().all(|&v| v == 1.0), "{} incomplete", f);
            }
            let lin = ScheduleSpec::new(ScheduleFamily::Linear, warmup, layers).unwrap();
            let rev = ScheduleSpec::new(ScheduleFamily::Reverse, warmup, layers).unwrap();
            let (la, ra) = (lin.alphas(t), rev.alphas(t));
            prop_assert!(la.windows(2).all(|w| w[0] >= w[1]), "linear depth order");
            prop_assert!(ra.windows(2).all(|w| w[0] <= w[1]), "reverse depth order");
            let sq = ScheduleSpec::new(ScheduleFamily::LinearSqrt, warmup, layers).unwrap().alpha(l, t).unwrap();
            prop_assert!((sq * sq - lin.alpha(l, t).unwrap()).abs() <= 1e-12, "sqrt^2");
            let sl = ScheduleSpec::new(ScheduleFamily::StagewiseL, warmup, layers).unwrap().alpha(l, t).unwrap();
            prop_assert!(sl >= 1.0 / layers as f64, "stagewise_L floor");
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok("4000 random cases over 12 families".into())
}

/// Reference RMS normalization with the kernel's rounding order.
fn rms_norm_ref(x: &[f32], gain: &[f32], d: usize, eps: f64) -> Vec<f32> {
    let mut out = Vec::with_capacity(x.len());
    for row in x.chunks(d) {
        let ms = row.iter().map(|&v| v as f64 * v as f64).sum::<f64>() / d as f64;
        let r = (1.0 / (ms + eps).sqrt()) as f32;
        out.extend(row.iter().zip(gain).map(|(&v, &g)| v * r * g));
    }
    out
}

fn identity_at_init() -> Result<String, String> {
    let ids = tokens(32, 32, 1);
    let mut checked = 0;
    for kind in VariantKind::ALL {
        for family in ZERO_START {
            let mut cfg = ModelConfig::tiny(4).with_variant(kind).with_schedule(family, 50).map_err(|e| e.to_string())?;
            cfg.d_model = 32;
            cfg.n_heads = 4;
            cfg.d_ff = prores::model::default_d_ff(32);
            cfg.init.seed = checked as u64;
            let m = Model::<f32>::init(cfg).map_err(|e| e.to_string())?;
            let a = m.activations(&ids, 2, AlphaMode::Step(0)).map_err(|e| e.to_string())?;
            if kind.has_identity_stream() {
                if !bits_equal(&a.states[0], a.states.last().unwrap()) {
                    return Err(format!("{kind}/{family}: final state differs from embedding"));
                }
            } else {
                let d = m.config.d_model;
                let c = m.config.deepnorm_constants().0 as f32;
                let mut x = a.states[0].data().to_vec();
                for l in 0..4 {
                    for norm in ["attn_norm", "ffn_norm"] {
                        if kind == VariantKind::DeepNorm {
                            x.iter_mut().for_each(|v| *v *= c);
                        }
                        let g = m.params.get(&format!("blocks.{l}.{norm}")).unwrap().data();
                        x = rms_norm_ref(&x, g, d, m.config.norm_eps);
                    }
                    let same = x.iter().zip(a.states[l + 1].data()).all(|(p, q)| p.to_bits() == q.to_bits());
                    if !same {
                        return Err(format!("{kind}/{family}: block {} differs from zero-scale reference", l + 1));
                    }
                }
            }
            checked += 1;
        }
    }
    Ok(format!("{checked} variant/schedule pairs bit-exact at t=0"))
}

fn perturbed(cfg: ModelConfig, seed: u64) -> Model<f32> {
    let mut m = Model::<f32>::init(cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for e in m.params.iter_mut() {
        for v in e.tensor.data_mut() {
            *v += rng.random_range(-0.05f32..0.05);
        }
    }
    m
}

fn full_scale_equivalence() -> Result<String, String> {
    let ids = tokens(32, 32, 2);
    let mut checked = 0;
    for kind in VariantKind::ALL {
        for family in ScheduleFamily::ALL.into_iter().filter(|f| f.is_warmup()) {
            let cfg = ModelConfig::tiny(4).with_variant(kind).with_schedule(family, 10).map_err(|e| e.to_string())?;
            let end = cfg.warmup_length().unwrap();
            let m = perturbed(cfg.clone(), checked);
            let mut none_cfg = cfg.clone();
            none_cfg.schedule = ScheduleSpec::none(4).unwrap();
            let base = Model::from_params(none_cfg, m.params.clone()).map_err(|e| e.to_string())?;
            let want = base.logits(&ids, 2, AlphaMode::Step(0)).map_err(|e| e.to_string())?;
            for t in [end, end + 1, end + 10_000] {
                let got = m.logits(&ids, 2, AlphaMode::Step(t)).map_err(|e| e.to_string())?;
                if !bits_equal(&got, &want) {
                    return Err(format!("{kind}/{family} at t={t}"));
                }
            }
            checked += 1;
        }
    }
    Ok(format!("{checked} variant/schedule pairs bit-identical to schedule none"))
}

fn gradient_checks() -> (bool, String) {
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for kind in VariantKind::ALL {
        let e = common::worst_error(kind, AlphaMode::Step(5)).max(common::worst_error(kind, AlphaMode::Step(1000)));
        worst = worst.max(e);
        parts.push(format!("{kind}={e:.1e}"));
    }
    (
        worst <= GRAD_TOL,
        format!("{} probes per variant, worst relative error {}", 2 * common::PROBES, parts.join(" ")),
    )
}

fn spike_oracle() -> Result<String, String> {
    let series = common::synthetic_series();
    let cfg = SpikeConfig::default();
    for (name, s) in &series {
        let got = spike_flags(s, &cfg).map_err(|e| e.to_string())?;
        let want = common::oracle_flags(s, cfg.window, cfg.threshold_sigmas, cfg.phase);
        if got != want {
            return Err(format!("{name}: flags differ from oracle"));
        }
        if name.starts_with("constant") && spike_score(s, &cfg).unwrap() != 0.0 {
            return Err(format!("{name}: nonzero score"));
        }
    }
    Ok(format!("{} series agree flag-for-flag; constants score 0", series.len()))
}

fn optimizer_closed_forms() -> Result<String, String> {
    let peak = 3e-4;
    let cfg = OptimConfig::new(peak, 100_000);
    let expect = [
        (0, 0.0),
        (1000, peak / 2.0),
        (2000, peak),
        (50_000, peak),
        (90_000, peak),
        (95_000, peak / 2.0),
        (100_000, 0.0),
    ];
    for (t, want) in expect {
        let got = lr_at(&cfg, t).map_err(|e| e.to_string())?;
        if got != want {
            return Err(format!("lr_at({t}) = {got:e}, want {want:e}"));
        }
    }
    for g in [0.25, 0.999, 1.0, 1.5, 40.0, 3e4] {
        let mut grads = vec![
            Tensor::<f64>::from_f64(&[3], &[g * 0.6, 0.0, 0.0]).unwrap(),
            Tensor::<f64>::from_f64(&[2], &[g * 0.8, 0.0]).unwrap(),
        ];
        clip_global(&mut grads, 1.0);
        let after = global_norm(&grads);
        if (after - g.min(1.0)).abs() > CLIP_TOL {
            return Err(format!("clip of norm {g} gave {after}"));
        }
    }
    // One AdamW step on a scalar: m = (1-b1) g, v = (1-b2) g^2, bias
    // corrections restore g and g^2, so the update is lr * g / (|g| + eps).
    let (p0, g, lr, wd, eps) = (1.5f64, -0.4f64, 1e-3, 0.1, 1e-8);
    let want = p0 * (1.0 - lr * wd) - lr * g / (g.abs() + eps);
    let mut params = ParamSet::<f64>::new();
    params.insert("w", ParamKind::Matrix, Tensor::from_f64(&[1, 1], &[p0]).unwrap()).unwrap();
    let mut state = OptimState::new(&params);
    let mut ocfg = OptimConfig::new(lr, 10);
    ocfg.weight_decay = wd;
    ocfg.eps = eps;
    adamw_step(&mut params, &[Tensor::from_f64(&[1, 1], &[g]).unwrap()], &mut state, &ocfg, lr)
        .map_err(|e| e.to_string())?;
    let got = params.get("w").unwrap().data()[0];
    if (got - want).abs() > ADAM_TOL {
        return Err(format!("AdamW step {got:.15} vs {want:.15}"));
    }
    Ok("7 breakpoints exact; 6 clip norms; AdamW scalar step within 1e-12".into())
}

fn checkpoint_and_resume() -> Result<String, String> {
    let cfg = TrainConfig::parse(
        "model.layers = 3\nmodel.d_model = 32\nmodel.n_heads = 4\nmodel.seq_len = 16\n\
         schedule.family = linear\nschedule.T = 8\noptim.peak_lr = 0.003\noptim.total_steps = 60\n\
         optim.lr_warmup_steps = 6\ndata.synthetic_bytes = 200000\ndata.batch_size = 4\n\
         data.max_eval_samples = 64\ntrain.checkpoint_every = 20\ntrain.dtype = f32\n",
    )
    .map_err(|e| e.to_string())?;
    let data = TrainData::load(&cfg.data, cfg.model.seq_len, None).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let straight = train::<f32>(&cfg, &data, TrainOptions::default()).map_err(|e| e.to_string())?;
    let opts = TrainOptions {
        out_dir: Some(dir.path().to_path_buf()),
        stop_after: Some(20),
        ..Default::default()
    };
    let first = train::<f32>(&cfg, &data, opts).map_err(|e| e.to_string())?;
    let ck = Checkpoint::<f32>::load(&dir.path().join("checkpoints").join(checkpoint_name(20))).map_err(|e| e.to_string())?;
    let probe = data.probe_batch(8);
    let a = first.model.logits(&probe.inputs, probe.batch_size, AlphaMode::Step(20)).unwrap();
    let b = ck.model().unwrap().logits(&probe.inputs, probe.batch_size, AlphaMode::Step(20)).unwrap();
    if !bits_equal(&a, &b) {
        return Err("reloaded checkpoint logits differ".into());
    }
    let opts = TrainOptions {
        out_dir: Some(dir.path().to_path_buf()),
        resume: Some(ck),
        ..Default::default()
    };
    let resumed = train::<f32>(&cfg, &data, opts).map_err(|e| e.to_string())?;
    for (x, y) in straight.records[20..].iter().zip(&resumed.records) {
        if x.step != y.step || x.train_loss.to_bits() != y.train_loss.to_bits() || x.grad_norm.to_bits() != y.grad_norm.to_bits() {
            return Err(format!("step {} differs after resume", x.step));
        }
    }
    if straight.model.params != resumed.model.params || resumed.records.len() != 40 {
        return Err("final parameters differ after resume".into());
    }
    Ok("logits bit-exact after reload; 40 resumed steps identical".into())
}

struct StressRun {
    out: TrainOutcome<f32>,
    seconds: f64,
}

impl StressRun {
    fn eval_loss(&self) -> f64 {
        self.out.final_eval.map_or(f64::NAN, |e| e.loss)
    }

    fn loss_spike(&self) -> f64 {
        spike_score(&self.out.series(|r| r.train_loss), &SpikeConfig::default()).unwrap_or(f64::NAN)
    }

    fn norms_at(&self, step: u64) -> Option<&Vec<f64>> {
        self.out.records.iter().find(|r| r.step == step)?.act_norms.as_ref()
    }
}

fn stress_config() -> TrainConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/stress.cfg");
    TrainConfig::load(Some(&path), &[]).expect("stress config")
}

fn stress_run(base: &TrainConfig, data: &TrainData, family: ScheduleFamily, warmup: u64) -> StressRun {
    let mut cfg = base.clone();
    cfg.model.schedule = ScheduleSpec::new(family, warmup, cfg.model.layers).unwrap();
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(format!("acceptance/{family}-T{warmup}"));
    let _ = std::fs::remove_dir_all(&dir);
    let clock = Instant::now();
    let out = train::<f32>(
        &cfg,
        data,
        TrainOptions {
            out_dir: Some(dir.clone()),
            probe_size: 8,
            ..Default::default()
        },
    )
    .expect("stress run");
    let seconds = clock.elapsed().as_secs_f64();
    eprintln!(
        "  {family} T={warmup}: {} after {} steps, eval loss {:.4}, {seconds:.0}s, {}",
        out.status.name(),
        out.step,
        out.final_eval.map_or(f64::NAN, |e| e.loss),
        dir.display()
    );
    StressRun { out, seconds }
}

fn main() {
    let mut r = Report::default();
    println!("acceptance report");

    match schedule_algebra() {
        Ok(d) => r.line("C1", true, true, "schedule algebra", d),
        Err(d) => r.line("C1", true, false, "schedule algebra", d),
    }
    match identity_at_init() {
        Ok(d) => r.line("C2", true, true, "identity at init", d),
        Err(d) => r.line("C2", true, false, "identity at init", d),
    }
    match full_scale_equivalence() {
        Ok(d) => r.line("C3", true, true, "equivalence after warmup", d),
        Err(d) => r.line("C3", true, false, "equivalence after warmup", d),
    }
    let (ok, d) = gradient_checks();
    r.line("C4", true, ok, "finite-difference gradients (2 blocks, d=16, f64)", d);
    match spike_oracle() {
        Ok(d) => r.line("C5", true, true, "spike score oracle", d),
        Err(d) => r.line("C5", true, false, "spike score oracle", d),
    }
    match optimizer_closed_forms() {
        Ok(d) => r.line("C6", true, true, "optimizer closed forms", d),
        Err(d) => r.line("C6", true, false, "optimizer closed forms", d),
    }
    match checkpoint_and_resume() {
        Ok(d) => r.line("C10", true, true, "checkpoint round trip and resume", d),
        Err(d) => r.line("C10", true, false, "checkpoint round trip and resume", d),
    }

    let base = stress_config();
    let cache = std::env::var_os(prores::cli::DATA_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("data"));
    let data = TrainData::load(&base.data, base.model.seq_len, Some(&cache)).expect("stress corpus");
    eprintln!(
        "stress corpus {} ({} train samples); peak_lr {}",
        &data.corpus_hash[..16],
        data.split.train.len(),
        base.optim.peak_lr
    );
    let layers = base.model.layers as u64;
    let total = base.optim.total_steps;
    let t = total / layers;
    let vanilla = stress_run(&base, &data, ScheduleFamily::None, 1);
    let linear = stress_run(&base, &data, ScheduleFamily::Linear, t);

    let target = 0.7 * LN_VOCAB;
    let completed = vanilla.out.status == RunStatus::Completed && linear.out.status == RunStatus::Completed;
    r.line(
        "C7a",
        true,
        completed && vanilla.eval_loss() <= target && linear.eval_loss() <= target,
        "both stress runs cut loss by 30% from ln 257",
        format!(
            "vanilla {:.4} ({}), linear:{t} {:.4} ({}), threshold {target:.4}",
            vanilla.eval_loss(),
            vanilla.out.status.name(),
            linear.eval_loss(),
            linear.out.status.name()
        ),
    );
    r.line(
        "C7b",
        false,
        linear.eval_loss() <= vanilla.eval_loss() + EVAL_MARGIN,
        "warmup eval loss within 0.02 of vanilla",
        format!("{:.4} vs {:.4}", linear.eval_loss(), vanilla.eval_loss()),
    );
    let (sv, sl) = (vanilla.loss_spike(), linear.loss_spike());
    r.line(
        "C7c",
        true,
        sl <= sv,
        "warmup loss spike score not above vanilla",
        format!("{sl:.4}% vs {sv:.4}%"),
    );
    let pair = vanilla.seconds + linear.seconds;
    r.line("C7d", true, pair <= PAIR_BUDGET_S, "stress pair runtime", format!("{pair:.0}s (budget {PAIR_BUDGET_S:.0}s)"));

    // Equal warms every block over the same total length as linear and reverse.
    let equal = stress_run(&base, &data, ScheduleFamily::Equal, total);
    let reverse = stress_run(&base, &data, ScheduleFamily::Reverse, t);
    let ppl = |s: &StressRun| s.eval_loss().exp();
    let (pl, pe, pr) = (ppl(&linear), ppl(&equal), ppl(&reverse));
    r.line(
        "C8a",
        true,
        pl <= pr,
        "perplexity linear <= reverse",
        format!("linear {pl:.4}, reverse {pr:.4}"),
    );
    r.line(
        "C8b",
        false,
        pl <= pe && pe <= pr,
        "perplexity linear <= equal <= reverse",
        format!("linear {pl:.4}, equal {pe:.4}, reverse {pr:.4}"),
    );
    let trio = linear.seconds + equal.seconds + reverse.seconds;
    r.line("C8c", true, trio <= TRIO_BUDGET_S, "schedule trio runtime", format!("{trio:.0}s (budget {TRIO_BUDGET_S:.0}s)"));

    let flat = linear.norms_at(0).is_some_and(|n| n.iter().all(|&v| v == n[0]));
    r.line(
        "C9a",
        true,
        flat,
        "activation norms constant across depth at step 0 under warmup",
        linear.norms_at(0).map_or("no norms recorded at step 0".into(), |n| {
            n.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(" ")
        }),
    );
    let at = total / 5;
    let ratio = |s: &StressRun| s.norms_at(at).map_or(f64::NAN, |n| n[n.len() - 1] / n[0]);
    let (rv, rl) = (ratio(&vanilla), ratio(&linear));
    r.line(
        "C9b",
        false,
        rv > rl,
        "vanilla last/first norm ratio above warmup ratio at 20% of training",
        format!("step {at}: vanilla {rv:.3}, linear {rl:.3}"),
    );

    if r.hard_failures.is_empty() {
        println!("acceptance: all hard criteria pass");
    } else {
        println!("acceptance: hard failures {}", r.hard_failures.join(", "));
        std::process::exit(1);
    }
}
