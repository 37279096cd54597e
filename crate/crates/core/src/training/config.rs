//! Plain-text `key = value` run configuration.
//!
//! Keys (all optional; unset keys take the defaults shown by
//! [`TrainConfig::to_text`] on `TrainConfig::default()`):
//!
//! | key | meaning |
//! |---|---|
//! | `model.layers`, `model.d_model`, `model.n_heads` | shape |
//! | `model.d_ff` | SwiGLU width; derived from `d_model` when unset |
//! | `model.vocab`, `model.seq_len` | byte vocab (257) and sequence length |
//! | `model.variant` | `pre_ln`, `post_ln`, `sandwich_ln`, `deepnorm`, `lns` |
//! | `model.final_norm`, `model.tied_embeddings` | booleans |
//! | `model.norm_eps`, `model.rope_theta` | numeric constants |
//! | `model.deepnorm_alpha`, `model.deepnorm_beta` | derived from depth when unset |
//! | `model.alpha_indexing` | `block` or `sublayer` |
//! | `schedule.family`, `schedule.T` | residual scale schedule |
//! | `init.scheme`, `init.std` | `default`, `ds_init`, `scaled_init`, `deepnorm` |
//! | `optim.peak_lr`, `optim.beta1`, `optim.beta2`, `optim.eps` | AdamW |
//! | `optim.weight_decay`, `optim.clip_norm` | AdamW |
//! | `optim.total_steps`, `optim.lr_warmup_steps`, `optim.decay_fraction` | LR schedule; warmup defaults to 10% of steps for post-norm variants |
//! | `data.sources` | comma-separated paths or `file://` URLs; empty selects the synthetic corpus |
//! | `data.synthetic_bytes`, `data.synthetic_seed` | synthetic corpus size and seed |
//! | `data.eval_fraction`, `data.batch_size`, `data.eval_batch_size` | split and batching |
//! | `data.max_eval_samples` | cap on evaluated samples, 0 for the full split |
//! | `train.seed` | parameter init and batch order |
//! | `train.dtype` | `f32` or `f64` |
//! | `train.log_every`, `train.probe_every`, `train.eval_every` | cadences in steps, 0 disables probe/eval |
//! | `train.checkpoint_every` | 0 selects the default cadence |
//! | `train.divergence_ppl` | eval perplexity above which a run counts as diverged |
//! | `train.flush_denormals` | flush subnormal floats to zero while training (x86_64 and aarch64) |

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use prores_tensor::DType;

use crate::init::InitScheme;
use crate::model::{default_d_ff, AlphaIndexing, LayerVariant, ModelConfig, VariantKind};
use crate::optim::OptimConfig;
use crate::schedules::{ScheduleFamily, ScheduleSpec};
use crate::Error;

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub sources: Vec<String>,
    pub synthetic_bytes: usize,
    pub synthetic_seed: u64,
    pub eval_fraction: f64,
    pub batch_size: usize,
    pub eval_batch_size: usize,
    pub max_eval_samples: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            sources: Vec::new(),
            synthetic_bytes: 10_000_000,
            synthetic_seed: 0,
            eval_fraction: 0.01,
            batch_size: 32,
            eval_batch_size: 32,
            max_eval_samples: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub optim: OptimConfig,
    pub data: DataConfig,
    pub seed: u64,
    pub dtype: DType,
    pub log_every: u64,
    pub probe_every: u64,
    pub eval_every: u64,
    /// 0 selects [`default_checkpoint_steps`].
    pub checkpoint_every: u64,
    pub divergence_ppl: f64,
    pub flush_denormals: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::from_pairs(&BTreeMap::new()).expect("defaults are valid")
    }
}

/// Checkpoint steps: 0, ten evenly spaced within the first 10% of training,
/// then every 10%.
pub fn default_checkpoint_steps(total: u64) -> Vec<u64> {
    let mut s: Vec<u64> = (0..=10).map(|i| total * i / 100).chain((1..=10).map(|i| total * i / 10)).collect();
    s.sort_unstable();
    s.dedup();
    s
}

const KEYS: &[&str] = &[
    "model.layers",
    "model.d_model",
    "model.n_heads",
    "model.d_ff",
    "model.vocab",
    "model.seq_len",
    "model.variant",
    "model.final_norm",
    "model.tied_embeddings",
    "model.norm_eps",
    "model.rope_theta",
    "model.deepnorm_alpha",
    "model.deepnorm_beta",
    "model.alpha_indexing",
    "schedule.family",
    "schedule.T",
    "init.scheme",
    "init.std",
    "optim.peak_lr",
    "optim.beta1",
    "optim.beta2",
    "optim.eps",
    "optim.weight_decay",
    "optim.clip_norm",
    "optim.total_steps",
    "optim.lr_warmup_steps",
    "optim.decay_fraction",
    "data.sources",
    "data.synthetic_bytes",
    "data.synthetic_seed",
    "data.eval_fraction",
    "data.batch_size",
    "data.eval_batch_size",
    "data.max_eval_samples",
    "train.seed",
    "train.dtype",
    "train.log_every",
    "train.probe_every",
    "train.eval_every",
    "train.checkpoint_every",
    "train.divergence_ppl",
    "train.flush_denormals",
];

/// Parses `key = value` lines; `#` starts a comment. Unknown keys are errors.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>, Error> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
        insert_pair(&mut out, k.trim(), v.trim())?;
    }
    Ok(out)
}

fn insert_pair(map: &mut BTreeMap<String, String>, key: &str, value: &str) -> Result<(), Error> {
    if !KEYS.contains(&key) {
        return Err(Error::Config(format!("unknown config key `{key}`")));
    }
    map.insert(key.to_string(), value.to_string());
    Ok(())
}

/// Parses a `key=value` override as given on the command line.
pub fn parse_override(s: &str) -> Result<(String, String), Error> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{s}` is not key=value")))?;
    let mut m = BTreeMap::new();
    insert_pair(&mut m, k.trim(), v.trim())?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

fn get<T: FromStr>(map: &BTreeMap<String, String>, key: &str, default: T) -> Result<T, Error> {
    match map.get(key) {
        None => Ok(default),
        Some(v) => v
            .parse()
            .map_err(|_| Error::Config(format!("bad value `{v}` for config key `{key}`"))),
    }
}

fn get_opt<T: FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<Option<T>, Error> {
    match map.get(key).map(String::as_str) {
        None | Some("") | Some("auto") => Ok(None),
        Some(v) => v
            .parse()
            .map(Some)
            .map_err(|_| Error::Config(format!("bad value `{v}` for config key `{key}`"))),
    }
}

fn keyed<T>(key: &str, r: Result<T, Error>) -> Result<T, Error> {
    r.map_err(|e| match e {
        Error::Config(m) if !m.contains(key) => Error::Config(format!("config key `{key}`: {m}")),
        other => other,
    })
}

impl TrainConfig {
    /// Builds a configuration from explicit pairs, filling derived defaults.
    pub fn from_pairs(map: &BTreeMap<String, String>) -> Result<Self, Error> {
        let layers = get(map, "model.layers", 8usize)?;
        let d_model = get(map, "model.d_model", 128usize)?;
        let kind: VariantKind = keyed("model.variant", get(map, "model.variant", VariantKind::PreLn))?;
        let family: ScheduleFamily = keyed("schedule.family", get(map, "schedule.family", ScheduleFamily::None))?;
        let warmup = get(map, "schedule.T", 1000u64)?;
        let schedule = keyed("schedule.T", ScheduleSpec::new(family, warmup, layers.max(1)).map_err(Error::from))?;
        let init_default = if kind == VariantKind::DeepNorm {
            InitScheme::DeepNorm
        } else {
            InitScheme::Default
        };
        let seed = get(map, "train.seed", 0u64)?;
        let mut model = ModelConfig {
            layers,
            d_model,
            n_heads: get(map, "model.n_heads", 4usize)?,
            d_ff: get(map, "model.d_ff", default_d_ff(d_model))?,
            vocab: get(map, "model.vocab", crate::data::VOCAB)?,
            seq_len: get(map, "model.seq_len", 256usize)?,
            variant: LayerVariant {
                kind,
                deepnorm_alpha: get_opt(map, "model.deepnorm_alpha")?,
                deepnorm_beta: get_opt(map, "model.deepnorm_beta")?,
            },
            schedule,
            alpha_indexing: keyed(
                "model.alpha_indexing",
                get(map, "model.alpha_indexing", AlphaIndexing::PerBlock),
            )?,
            init: Default::default(),
            final_norm: get(map, "model.final_norm", kind.default_final_norm())?,
            tied_embeddings: get(map, "model.tied_embeddings", false)?,
            norm_eps: get(map, "model.norm_eps", 1e-6)?,
            rope_theta: get(map, "model.rope_theta", 10_000.0)?,
        };
        model.init.scheme = keyed("init.scheme", get(map, "init.scheme", init_default))?;
        model.init.base_std = get(map, "init.std", 0.02)?;
        model.init.seed = seed;
        keyed("model", model.validate())?;

        let total_steps = get(map, "optim.total_steps", 3000u64)?;
        let warm_default = if kind.default_final_norm() { 2000.min(total_steps / 2) } else { total_steps / 10 };
        let optim = OptimConfig {
            peak_lr: get(map, "optim.peak_lr", 1e-3)?,
            beta1: get(map, "optim.beta1", 0.9)?,
            beta2: get(map, "optim.beta2", 0.95)?,
            eps: get(map, "optim.eps", 1e-8)?,
            weight_decay: get(map, "optim.weight_decay", 0.1)?,
            clip_norm: get(map, "optim.clip_norm", 1.0)?,
            total_steps,
            lr_warmup_steps: get(map, "optim.lr_warmup_steps", warm_default)?,
            decay_fraction: get(map, "optim.decay_fraction", 0.10)?,
        };
        keyed("optim", optim.validate())?;

        let sources = map
            .get("data.sources")
            .map(|s| s.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect())
            .unwrap_or_default();
        let dd = DataConfig::default();
        let data = DataConfig {
            sources,
            synthetic_bytes: get(map, "data.synthetic_bytes", dd.synthetic_bytes)?,
            synthetic_seed: get(map, "data.synthetic_seed", dd.synthetic_seed)?,
            eval_fraction: get(map, "data.eval_fraction", dd.eval_fraction)?,
            batch_size: get(map, "data.batch_size", dd.batch_size)?,
            eval_batch_size: get(map, "data.eval_batch_size", dd.eval_batch_size)?,
            max_eval_samples: get(map, "data.max_eval_samples", dd.max_eval_samples)?,
        };
        let dtype = match map.get("train.dtype").map(String::as_str).unwrap_or("f32") {
            "f32" => DType::F32,
            "f64" => DType::F64,
            other => return Err(Error::Config(format!("bad value `{other}` for config key `train.dtype`"))),
        };
        let cfg = Self {
            model,
            optim,
            data,
            seed,
            dtype,
            log_every: get(map, "train.log_every", 1u64)?,
            probe_every: get(map, "train.probe_every", 0u64)?,
            eval_every: get(map, "train.eval_every", 0u64)?,
            checkpoint_every: get(map, "train.checkpoint_every", 0u64)?,
            divergence_ppl: get(map, "train.divergence_ppl", 1000.0)?,
            flush_denormals: get(map, "train.flush_denormals", false)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, Error> {
        Self::from_pairs(&parse_pairs(text)?)
    }

    /// File values first, then `overrides` in order.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self, Error> {
        let mut map = match path {
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("cannot read config {}: {e}", p.display())))?;
                parse_pairs(&text)?
            }
            None => BTreeMap::new(),
        };
        for (k, v) in overrides {
            insert_pair(&mut map, k, v)?;
        }
        Self::from_pairs(&map)
    }

    pub fn validate(&self) -> Result<(), Error> {
        self.model.validate()?;
        self.optim.validate()?;
        if self.log_every == 0 {
            return Err(Error::Config("config key `train.log_every` must be >= 1".into()));
        }
        if self.data.batch_size == 0 || self.data.eval_batch_size == 0 {
            return Err(Error::Config("config key `data.batch_size` must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.data.eval_fraction) {
            return Err(Error::Config("config key `data.eval_fraction` must lie in [0, 1)".into()));
        }
        if !(self.divergence_ppl > 1.0) {
            return Err(Error::Config("config key `train.divergence_ppl` must exceed 1".into()));
        }
        Ok(())
    }

    /// Steps after which a checkpoint is written (counted in completed updates).
    pub fn checkpoint_steps(&self) -> Vec<u64> {
        let total = self.optim.total_steps;
        if self.checkpoint_every == 0 {
            return default_checkpoint_steps(total);
        }
        let mut s: Vec<u64> = (0..=total).step_by(self.checkpoint_every as usize).collect();
        if s.last() != Some(&total) {
            s.push(total);
        }
        s
    }

    /// Every key with its effective value; parses back to an equal config.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        let m = &self.model;
        let o = &self.optim;
        let d = &self.data;
        let opt = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_else(|| "auto".into());
        vec![
            ("model.layers", m.layers.to_string()),
            ("model.d_model", m.d_model.to_string()),
            ("model.n_heads", m.n_heads.to_string()),
            ("model.d_ff", m.d_ff.to_string()),
            ("model.vocab", m.vocab.to_string()),
            ("model.seq_len", m.seq_len.to_string()),
            ("model.variant", m.variant.kind.name().into()),
            ("model.final_norm", m.final_norm.to_string()),
            ("model.tied_embeddings", m.tied_embeddings.to_string()),
            ("model.norm_eps", format!("{:?}", m.norm_eps)),
            ("model.rope_theta", format!("{:?}", m.rope_theta)),
            ("model.deepnorm_alpha", opt(m.variant.deepnorm_alpha)),
            ("model.deepnorm_beta", opt(m.variant.deepnorm_beta)),
            ("model.alpha_indexing", m.alpha_indexing.name().into()),
            ("schedule.family", m.schedule.family().name().into()),
            ("schedule.T", m.schedule.warmup().to_string()),
            ("init.scheme", m.init.scheme.name().into()),
            ("init.std", format!("{:?}", m.init.base_std)),
            ("optim.peak_lr", format!("{:?}", o.peak_lr)),
            ("optim.beta1", format!("{:?}", o.beta1)),
            ("optim.beta2", format!("{:?}", o.beta2)),
            ("optim.eps", format!("{:?}", o.eps)),
            ("optim.weight_decay", format!("{:?}", o.weight_decay)),
            ("optim.clip_norm", format!("{:?}", o.clip_norm)),
            ("optim.total_steps", o.total_steps.to_string()),
            ("optim.lr_warmup_steps", o.lr_warmup_steps.to_string()),
            ("optim.decay_fraction", format!("{:?}", o.decay_fraction)),
            ("data.sources", d.sources.join(",")),
            ("data.synthetic_bytes", d.synthetic_bytes.to_string()),
            ("data.synthetic_seed", d.synthetic_seed.to_string()),
            ("data.eval_fraction", format!("{:?}", d.eval_fraction)),
            ("data.batch_size", d.batch_size.to_string()),
            ("data.eval_batch_size", d.eval_batch_size.to_string()),
            ("data.max_eval_samples", d.max_eval_samples.to_string()),
            ("train.seed", self.seed.to_string()),
            ("train.dtype", if self.dtype == DType::F32 { "f32" } else { "f64" }.into()),
            ("train.log_every", self.log_every.to_string()),
            ("train.probe_every", self.probe_every.to_string()),
            ("train.eval_every", self.eval_every.to_string()),
            ("train.checkpoint_every", self.checkpoint_every.to_string()),
            ("train.divergence_ppl", format!("{:?}", self.divergence_ppl)),
            ("train.flush_denormals", self.flush_denormals.to_string()),
        ]
    }

    pub fn to_text(&self) -> String {
        self.to_pairs().iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}
