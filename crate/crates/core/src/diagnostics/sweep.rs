use std::path::Path;

use prores_tensor::Element;

use super::{spike_score, SpikeConfig};
use crate::report::{sig6, Csv};
use crate::schedules::{ScheduleFamily, ScheduleSpec};
use crate::training::{train, RunStatus, TrainConfig, TrainData, TrainOptions};
use crate::Error;

/// A schedule family with its first-layer warmup length.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Method {
    pub family: ScheduleFamily,
    pub warmup: u64,
}

impl Method {
    pub fn label(&self) -> String {
        if self.family.is_warmup() {
            format!("{}:{}", self.family, self.warmup)
        } else {
            self.family.to_string()
        }
    }

    /// `family` or `family:T`; `T` defaults to `default_warmup`.
    pub fn parse(s: &str, default_warmup: u64) -> Result<Self, Error> {
        let (f, t) = match s.split_once(':') {
            Some((f, t)) => (
                f,
                t.parse()
                    .map_err(|_| Error::Config(format!("bad warmup in method `{s}`")))?,
            ),
            None => (s, default_warmup),
        };
        Ok(Self {
            family: f.parse()?,
            warmup: t,
        })
    }
}

#[derive(Debug, Clone)]
pub struct SweepCell {
    pub label: String,
    pub config: TrainConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub label: String,
    pub depth: usize,
    pub schedule: String,
    pub warmup: u64,
    pub status: RunStatus,
    pub eval_loss: f64,
    pub ppl: f64,
    pub loss_spike: f64,
    pub grad_spike: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut csv = Csv::new([
            "method", "depth", "schedule", "T", "status", "eval_loss", "ppl", "loss_spike", "grad_spike",
        ]);
        for r in &self.rows {
            csv.push(vec![
                r.label.clone(),
                r.depth.to_string(),
                r.schedule.clone(),
                r.warmup.to_string(),
                r.status.name().into(),
                sig6(r.eval_loss),
                sig6(r.ppl),
                sig6(r.loss_spike),
                sig6(r.grad_spike),
            ]);
        }
        csv.render()
    }

    pub fn find(&self, label: &str, depth: usize) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.label == label && r.depth == depth)
    }
}

/// Trains every cell in order on shared data; diverged cells are recorded
/// and the sweep continues. Spike scores use `spike`, or a window fitted to
/// the run length when unset; they are NaN when a run is too short to score.
pub fn sweep<T: Element>(
    cells: &[SweepCell],
    data: &TrainData,
    out_dir: Option<&Path>,
    spike: Option<SpikeConfig>,
) -> Result<SweepTable, Error> {
    let mut table = SweepTable::default();
    for (i, cell) in cells.iter().enumerate() {
        let options = TrainOptions::<T> {
            out_dir: out_dir.map(|d| d.join(format!("{i:02}-{}", cell.label.replace([':', '/'], "_")))),
            ..Default::default()
        };
        let out = train::<T>(&cell.config, data, options)?;
        let losses = out.series(|r| r.train_loss);
        let grads = out.series(|r| r.grad_norm);
        let sc = spike.unwrap_or_else(|| SpikeConfig::fitted(losses.len()));
        let score = |s: &[f64]| spike_score(s, &sc).unwrap_or(f64::NAN);
        let (loss_spike, grad_spike) = if out.status == RunStatus::Completed {
            (score(&losses), score(&grads))
        } else {
            (f64::NAN, f64::NAN)
        };
        let (eval_loss, ppl) = out.final_eval.map_or((f64::NAN, f64::NAN), |e| (e.loss, e.ppl));
        let s = cell.config.model.schedule;
        table.rows.push(SweepRow {
            label: cell.label.clone(),
            depth: cell.config.model.layers,
            schedule: s.family().to_string(),
            warmup: s.warmup(),
            status: out.status,
            eval_loss,
            ppl,
            loss_spike,
            grad_spike,
        });
    }
    Ok(table)
}

fn with_method(base: &TrainConfig, depth: usize, m: Method) -> Result<TrainConfig, Error> {
    let mut c = base.clone();
    c.model = c.model.with_layers(depth)?;
    c.model.variant.deepnorm_alpha = base.model.variant.deepnorm_alpha;
    c.model.schedule = ScheduleSpec::new(m.family, m.warmup, depth)?;
    c.validate()?;
    Ok(c)
}

/// Every method at every depth, same width and data.
pub fn depth_sweep<T: Element>(
    base: &TrainConfig,
    depths: &[usize],
    methods: &[Method],
    data: &TrainData,
    out_dir: Option<&Path>,
) -> Result<SweepTable, Error> {
    let mut cells = Vec::new();
    for &d in depths {
        for &m in methods {
            cells.push(SweepCell {
                label: m.label(),
                config: with_method(base, d, m)?,
            });
        }
    }
    sweep::<T>(&cells, data, out_dir, None)
}

/// Every family with every first-layer warmup length at the base depth.
pub fn schedule_sweep<T: Element>(
    base: &TrainConfig,
    families: &[ScheduleFamily],
    warmups: &[u64],
    data: &TrainData,
    out_dir: Option<&Path>,
) -> Result<SweepTable, Error> {
    let mut cells = Vec::new();
    for &f in families {
        let ts: Vec<u64> = if f.is_warmup() || f == ScheduleFamily::Equal { warmups.to_vec() } else { vec![1] };
        for t in ts {
            let m = Method { family: f, warmup: t };
            cells.push(SweepCell {
                label: m.label(),
                config: with_method(base, base.model.layers, m)?,
            });
        }
    }
    sweep::<T>(&cells, data, out_dir, None)
}
