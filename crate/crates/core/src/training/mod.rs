//! Training loop: step counter, residual scales, forward/backward, clipping,
//! AdamW, metrics and checkpoints.

mod checkpoint;
mod config;
mod metrics;

use std::path::{Path, PathBuf};
use std::time::Instant;

use prores_tensor::{Element, FlushDenormals, KernelError};

pub use checkpoint::{checkpoint_dtype, checkpoint_name, Checkpoint};
pub use config::{default_checkpoint_steps, parse_override, parse_pairs, DataConfig, TrainConfig};
pub use metrics::{Event, MetricsLog, MetricsRecord, MetricsSink};

use crate::data::{eval_batches, ingest, synthetic_corpus, Batch, Batches, PackedDataset, Split};
use crate::diagnostics::activation_norms;
use crate::model::{AlphaMode, Model};
use crate::optim::{adamw_step, clip_global, lr_at, OptimState};
use crate::Error;

/// Packed corpus with its split, shared read-only by every run.
#[derive(Debug, Clone)]
pub struct TrainData {
    pub corpus_hash: String,
    pub dataset: PackedDataset,
    pub split: Split,
}

impl TrainData {
    /// Reads `cfg.sources`, or generates the synthetic corpus when none are
    /// given. With `cache_dir`, the packed tokens are cached there.
    pub fn load(cfg: &DataConfig, seq_len: usize, cache_dir: Option<&Path>) -> Result<Self, Error> {
        let corpus = if cfg.sources.is_empty() {
            synthetic_corpus(cfg.synthetic_bytes, cfg.synthetic_seed)
        } else {
            ingest(&cfg.sources)?
        };
        let dataset = match cache_dir {
            Some(d) => PackedDataset::cached(&corpus, seq_len, d)?,
            None => crate::data::pack(&corpus, seq_len)?,
        };
        Self::new(corpus.hash().to_string(), dataset, cfg.eval_fraction)
    }

    pub fn new(corpus_hash: String, dataset: PackedDataset, eval_fraction: f64) -> Result<Self, Error> {
        let split = dataset.split(eval_fraction)?;
        if split.train.is_empty() {
            return Err(Error::Data("no training samples".into()));
        }
        Ok(Self {
            corpus_hash,
            dataset,
            split,
        })
    }

    /// The fixed probe batch: the first `size` eval samples (train samples if
    /// the eval split is empty).
    pub fn probe_batch(&self, size: usize) -> Batch {
        let pool = if self.split.eval.is_empty() { &self.split.train } else { &self.split.eval };
        let n = size.min(pool.len()).max(1);
        eval_batches(&self.dataset, &pool[..n], n).remove(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalResult {
    /// Mean next-token NLL in nats.
    pub loss: f64,
    pub ppl: f64,
    pub tokens: usize,
}

/// Mean token NLL over the eval split (or its first `max_samples`).
pub fn evaluate<T: Element>(
    model: &Model<T>,
    data: &TrainData,
    batch_size: usize,
    max_samples: usize,
    mode: AlphaMode,
) -> Result<EvalResult, Error> {
    let pool = &data.split.eval;
    if pool.is_empty() {
        return Err(Error::Data("empty eval split".into()));
    }
    let pool = if max_samples > 0 && max_samples < pool.len() { &pool[..max_samples] } else { &pool[..] };
    let mut sum = 0.0;
    let mut tokens = 0;
    for b in eval_batches(&data.dataset, pool, batch_size) {
        let l = model.loss(&b.inputs, &b.targets, b.batch_size, mode)?;
        sum += l * b.targets.len() as f64;
        tokens += b.targets.len();
    }
    let loss = sum / tokens as f64;
    Ok(EvalResult {
        loss,
        ppl: loss.exp(),
        tokens,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Completed,
    Diverged,
    Aborted,
}

impl RunStatus {
    pub fn name(self) -> &'static str {
        match self {
            RunStatus::Completed => "completed",
            RunStatus::Diverged => "diverged",
            RunStatus::Aborted => "aborted",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Divergence {
    pub step: u64,
    pub reason: String,
}

/// Run-time knobs that are not part of the scientific configuration.
#[derive(Debug, Clone, Default)]
pub struct TrainOptions<T> {
    /// Where `metrics.log` and `checkpoints/` go; nothing is written when unset.
    pub out_dir: Option<PathBuf>,
    pub resume: Option<Checkpoint<T>>,
    /// Stop (status `aborted`) once this many updates have completed.
    pub stop_after: Option<u64>,
    /// Keep every checkpoint in memory as well.
    pub keep_checkpoints: bool,
    /// Batch size of the fixed activation-norm probe.
    pub probe_size: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub status: RunStatus,
    /// Completed updates.
    pub step: u64,
    pub model: Model<T>,
    pub optim: OptimState,
    pub records: Vec<MetricsRecord>,
    pub checkpoint_steps: Vec<u64>,
    pub checkpoints: Vec<Checkpoint<T>>,
    pub final_eval: Option<EvalResult>,
    pub divergence: Option<Divergence>,
}

impl<T> TrainOutcome<T> {
    pub fn series(&self, f: impl Fn(&MetricsRecord) -> f64) -> Vec<f64> {
        self.records.iter().map(f).collect()
    }
}

fn is_non_finite(e: &Error) -> bool {
    matches!(
        e,
        Error::Kernel(KernelError::NonFinite { .. })
            | Error::Activation {
                source: KernelError::NonFinite { .. },
                ..
            }
    )
}

/// Runs `config.optim.total_steps` updates. Update `t` uses the residual
/// scales and learning rate of step `t`; the checkpoint written after it is
/// labelled `t + 1`. A non-finite loss or gradient stops the run with status
/// `diverged` and leaves earlier checkpoints untouched.
pub fn train<T: Element>(config: &TrainConfig, data: &TrainData, options: TrainOptions<T>) -> Result<TrainOutcome<T>, Error> {
    config.validate()?;
    // Held for the whole run so resumed and uninterrupted runs share one mode.
    let _flush = FlushDenormals::enable(config.flush_denormals);
    let total = config.optim.total_steps;
    let (mut model, mut state, start) = match options.resume {
        Some(ck) => {
            if ck.config.model != config.model {
                return Err(Error::Config("checkpoint model does not match the run config".into()));
            }
            let model = ck.model()?;
            let state = ck.optim.clone().unwrap_or_else(|| OptimState::new(&model.params));
            (model, state, ck.step)
        }
        None => {
            let mut mc = config.model.clone();
            mc.init.seed = config.seed;
            let model = Model::<T>::init(mc)?;
            let state = OptimState::new(&model.params);
            (model, state, 0)
        }
    };
    if start > total {
        return Err(Error::Config(format!("resume step {start} beyond total_steps {total}")));
    }
    let ck_dir = options.out_dir.as_ref().map(|d| d.join("checkpoints"));
    let mut sink = match &options.out_dir {
        Some(d) => {
            std::fs::create_dir_all(d)?;
            MetricsSink::open(&d.join("metrics.log"), start)?
        }
        None => MetricsSink::discard(),
    };
    let ck_steps = config.checkpoint_steps();
    let mut written = Vec::new();
    let mut kept = Vec::new();
    let mut save = |model: &Model<T>, state: &OptimState, step: u64| -> Result<(), Error> {
        let ck = Checkpoint {
            step,
            config: config.clone(),
            params: model.params.clone(),
            optim: Some(state.clone()),
        };
        if let Some(d) = &ck_dir {
            ck.save(&d.join(checkpoint_name(step)))?;
        }
        written.push(step);
        if options.keep_checkpoints {
            kept.push(ck);
        }
        Ok(())
    };
    if start == 0 && ck_steps.contains(&0) {
        save(&model, &state, 0)?;
    }

    let probe = (config.probe_every > 0).then(|| data.probe_batch(options.probe_size.max(1)));
    let mut batches = Batches::new(&data.dataset, &data.split.train, config.data.batch_size, config.seed)?;
    let schedule = config.model.effective_schedule();
    let mut records = Vec::new();
    let mut divergence = None;
    let mut t = start;
    while t < total {
        if options.stop_after.is_some_and(|s| t >= s) {
            break;
        }
        let clock = Instant::now();
        let logged = t % config.log_every == 0;
        let act_norms = match &probe {
            Some(p) if logged && t % config.probe_every == 0 => {
                Some(activation_norms(&model, p, AlphaMode::Step(t))?)
            }
            _ => None,
        };
        let eval_loss = if logged && config.eval_every > 0 && t % config.eval_every == 0 {
            let e = evaluate(
                &model,
                data,
                config.data.eval_batch_size,
                config.data.max_eval_samples,
                AlphaMode::Step(t),
            )?;
            Some(e.loss)
        } else {
            None
        };
        let batch = batches.batch_at(t);
        let step_result = model
            .loss_and_grads(&batch.inputs, &batch.targets, batch.batch_size, AlphaMode::Step(t))
            .and_then(|(loss, grads)| {
                if loss.is_finite() {
                    Ok((loss, grads))
                } else {
                    Err(Error::Kernel(KernelError::NonFinite {
                        op: "loss",
                        shapes: Vec::new(),
                    }))
                }
            });
        let (loss, mut grads) = match step_result {
            Ok(v) => v,
            Err(e) if is_non_finite(&e) => {
                divergence = Some(Divergence {
                    step: t,
                    reason: format!("non_finite_loss ({e})"),
                });
                break;
            }
            Err(e) => return Err(e),
        };
        let grad_norm = clip_global(&mut grads, config.optim.clip_norm);
        let lr = lr_at(&config.optim, t)?;
        match adamw_step(&mut model.params, &grads, &mut state, &config.optim, lr) {
            Ok(()) => {}
            Err(e @ Error::NonFiniteGradient { .. }) => {
                divergence = Some(Divergence {
                    step: t,
                    reason: format!("non_finite_gradient ({e})"),
                });
                break;
            }
            Err(e) => return Err(e),
        }
        let wall_ms = clock.elapsed().as_secs_f64() * 1e3;
        if logged {
            let rec = MetricsRecord {
                step: t,
                train_loss: loss,
                grad_norm,
                lr,
                alphas: schedule.alphas(t),
                wall_ms,
                eval_loss,
                act_norms,
            };
            sink.write_line(&rec.to_line())?;
            records.push(rec);
        }
        t += 1;
        if ck_steps.contains(&t) {
            save(&model, &state, t)?;
        }
    }

    let mut final_eval = None;
    let status = if let Some(d) = &divergence {
        let reason = d.reason.split_whitespace().next().unwrap_or("non_finite").to_string();
        sink.write_line(&Event::new("diverged", &[("step", d.step.to_string()), ("reason", reason)]).to_line())?;
        RunStatus::Diverged
    } else if t < total {
        sink.write_line(&Event::new("aborted", &[("step", t.to_string())]).to_line())?;
        RunStatus::Aborted
    } else {
        let e = if data.split.eval.is_empty() {
            None
        } else {
            Some(evaluate(
                &model,
                data,
                config.data.eval_batch_size,
                config.data.max_eval_samples,
                AlphaMode::Step(t),
            )?)
        };
        final_eval = e;
        let diverged = e.is_some_and(|e| !(e.ppl <= config.divergence_ppl));
        let mut fields = vec![("step", t.to_string())];
        if let Some(e) = e {
            fields.push(("eval_loss", e.loss.to_string()));
            fields.push(("eval_ppl", e.ppl.to_string()));
        }
        if diverged {
            fields.push(("reason", "ppl_above_threshold".into()));
            divergence = Some(Divergence {
                step: t,
                reason: "ppl_above_threshold".into(),
            });
            sink.write_line(&Event::new("diverged", &fields).to_line())?;
            RunStatus::Diverged
        } else {
            sink.write_line(&Event::new("completed", &fields).to_line())?;
            RunStatus::Completed
        }
    };
    Ok(TrainOutcome {
        status,
        step: t,
        model,
        optim: state,
        records,
        checkpoint_steps: written,
        checkpoints: kept,
        final_eval,
        divergence,
    })
}
