//! AdamW with decoupled weight decay, global-norm clipping and the
//! warmup-stable-decay learning-rate schedule.

use prores_tensor::{Element, Tensor};

use crate::model::ParamSet;
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimConfig {
    pub peak_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub clip_norm: f64,
    pub total_steps: u64,
    pub lr_warmup_steps: u64,
    /// Fraction of `total_steps` spent decaying linearly to zero.
    pub decay_fraction: f64,
}

impl OptimConfig {
    pub fn new(peak_lr: f64, total_steps: u64) -> Self {
        Self {
            peak_lr,
            beta1: 0.9,
            beta2: 0.95,
            eps: 1e-8,
            weight_decay: 0.1,
            clip_norm: 1.0,
            total_steps,
            lr_warmup_steps: 2000,
            decay_fraction: 0.10,
        }
    }

    /// First step of the decay phase (may be fractional).
    pub fn decay_start(&self) -> f64 {
        self.total_steps as f64 * (1.0 - self.decay_fraction)
    }

    pub fn validate(&self) -> Result<(), Error> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.peak_lr > 0.0 && self.peak_lr.is_finite()) {
            return bad(format!("peak_lr must be positive, got {}", self.peak_lr));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("betas must lie in [0, 1)".into());
        }
        if !(self.eps > 0.0) || !(self.weight_decay >= 0.0) || !(self.clip_norm > 0.0) {
            return bad("eps and clip_norm must be positive, weight_decay non-negative".into());
        }
        if self.total_steps == 0 {
            return bad("total_steps must be positive".into());
        }
        if !(self.decay_fraction > 0.0 && self.decay_fraction < 1.0) {
            return bad(format!("decay_fraction must lie in (0, 1), got {}", self.decay_fraction));
        }
        if self.lr_warmup_steps as f64 >= self.decay_start() {
            return bad(format!(
                "lr_warmup_steps {} must end before the decay phase at {}",
                self.lr_warmup_steps,
                self.decay_start()
            ));
        }
        Ok(())
    }

    pub fn lr_at(&self, t: u64) -> Result<f64, Error> {
        lr_at(self, t)
    }
}

/// Warmup-stable-decay: linear `0 -> peak`, constant, linear `peak -> 0`.
pub fn lr_at(config: &OptimConfig, t: u64) -> Result<f64, Error> {
    if t > config.total_steps {
        return Err(Error::Config(format!(
            "step {t} beyond total_steps {}",
            config.total_steps
        )));
    }
    let peak = config.peak_lr;
    let tf = t as f64;
    let warm = config.lr_warmup_steps;
    let decay_start = config.decay_start();
    if t < warm {
        return Ok(peak * tf / warm as f64);
    }
    if tf <= decay_start {
        return Ok(peak);
    }
    let total = config.total_steps as f64;
    Ok(peak * (total - tf) / (total - decay_start))
}

/// L2 norm over every element of every tensor, accumulated in f64.
pub fn global_norm<T: Element>(grads: &[Tensor<T>]) -> f64 {
    grads.iter().map(Tensor::sum_sq).sum::<f64>().sqrt()
}

/// Rescales all gradients so their global norm is at most `clip_norm`.
/// Returns the norm before clipping.
pub fn clip_global<T: Element>(grads: &mut [Tensor<T>], clip_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > clip_norm {
        let s = clip_norm / norm;
        for g in grads.iter_mut() {
            for v in g.data_mut() {
                *v = T::cast_from(v.as_f64() * s);
            }
        }
    }
    norm
}

/// First and second moments, kept in f64 regardless of parameter precision.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    /// Number of completed updates.
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl OptimState {
    pub fn new<T: Element>(params: &ParamSet<T>) -> Self {
        let zeros = || params.iter().map(|e| vec![0.0; e.tensor.numel()]).collect();
        Self {
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn matches<T: Element>(&self, params: &ParamSet<T>) -> bool {
        self.m.len() == params.len()
            && self.v.len() == params.len()
            && params
                .iter()
                .zip(self.m.iter().zip(&self.v))
                .all(|(e, (m, v))| m.len() == e.tensor.numel() && v.len() == e.tensor.numel())
    }
}

/// One bias-corrected AdamW update. Decay `p *= 1 - lr * wd` touches weight
/// matrices only. A non-finite gradient aborts before anything is modified.
pub fn adamw_step<T: Element>(
    params: &mut ParamSet<T>,
    grads: &[Tensor<T>],
    state: &mut OptimState,
    config: &OptimConfig,
    lr: f64,
) -> Result<(), Error> {
    if grads.len() != params.len() || !state.matches(params) {
        return Err(Error::Config("gradients or optimizer state do not match parameters".into()));
    }
    for (e, g) in params.iter().zip(grads) {
        if g.shape() != e.tensor.shape() {
            return Err(Error::Config(format!("gradient shape mismatch for `{}`", e.name)));
        }
        if !g.is_finite() {
            return Err(Error::NonFiniteGradient {
                param: e.name.clone(),
                step: state.step,
            });
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (config.beta1, config.beta2);
    let bc1 = 1.0 - b1.powi(t);
    let bc2 = 1.0 - b2.powi(t);
    for (i, (e, g)) in params.iter_mut().zip(grads).enumerate() {
        let decay = if e.kind.decays() { 1.0 - lr * config.weight_decay } else { 1.0 };
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for (j, p) in e.tensor.data_mut().iter_mut().enumerate() {
            let gj = g.data()[j].as_f64();
            m[j] = b1 * m[j] + (1.0 - b1) * gj;
            v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
            let update = (m[j] / bc1) / ((v[j] / bc2).sqrt() + config.eps);
            *p = T::cast_from(p.as_f64() * decay - lr * update);
        }
    }
    Ok(())
}
