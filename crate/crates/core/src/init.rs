//! Parameter initialization: truncated normal with depth-dependent scaling.

use std::fmt;
use std::str::FromStr;

use prores_tensor::{Element, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::model::{ModelConfig, ParamKind, ParamSet, ParamSlot};
use crate::Error;

/// Samples beyond this many standard deviations are redrawn.
pub const TRUNCATION_SIGMAS: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InitScheme {
    Default,
    DsInit,
    ScaledInit,
    DeepNorm,
}

impl InitScheme {
    pub fn name(self) -> &'static str {
        match self {
            InitScheme::Default => "default",
            InitScheme::DsInit => "ds_init",
            InitScheme::ScaledInit => "scaled_init",
            InitScheme::DeepNorm => "deepnorm",
        }
    }
}

impl fmt::Display for InitScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for InitScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.trim().replace('-', "_").to_ascii_lowercase().as_str() {
            "default" => Ok(InitScheme::Default),
            "ds_init" => Ok(InitScheme::DsInit),
            "scaled_init" => Ok(InitScheme::ScaledInit),
            "deepnorm" => Ok(InitScheme::DeepNorm),
            _ => Err(Error::Config(format!("unknown init scheme `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitSpec {
    pub scheme: InitScheme,
    pub base_std: f64,
    pub seed: u64,
}

impl Default for InitSpec {
    fn default() -> Self {
        Self {
            scheme: InitScheme::Default,
            base_std: 0.02,
            seed: 0,
        }
    }
}

impl InitSpec {
    pub fn validate(&self) -> Result<(), Error> {
        if !(self.base_std > 0.0 && self.base_std.is_finite()) {
            return Err(Error::Config(format!(
                "init_std must be positive, got {}",
                self.base_std
            )));
        }
        Ok(())
    }
}

/// DeepNet decoder constants: residual multiplier `(2L)^(1/4)`.
pub fn deepnorm_alpha(layers: usize) -> f64 {
    (2.0 * layers as f64).powf(0.25)
}

/// DeepNet decoder constants: sublayer init gain `(8L)^(-1/4)`.
pub fn deepnorm_beta(layers: usize) -> f64 {
    (8.0 * layers as f64).powf(-0.25)
}

/// Standard deviation assigned to one parameter tensor under `spec`.
pub fn target_std(config: &ModelConfig, spec: &InitSpec, slot: ParamSlot) -> f64 {
    let base = spec.base_std;
    let layers = config.layers as f64;
    match (spec.scheme, slot) {
        (_, ParamSlot::Gain { .. }) => 0.0,
        (InitScheme::Default, _) => base,
        (InitScheme::ScaledInit, ParamSlot::Weight { residual_out: true, .. }) => {
            base / (2.0 * layers).sqrt()
        }
        (InitScheme::DsInit, ParamSlot::Weight { residual_out: true, layer: Some(l), .. }) => {
            base / (2.0 * l as f64).sqrt()
        }
        (InitScheme::DeepNorm, ParamSlot::Weight { deepnorm_scaled: true, .. }) => {
            base * config.deepnorm_constants().1
        }
        _ => base,
    }
}

fn truncated_normal(rng: &mut ChaCha8Rng, std: f64) -> f64 {
    loop {
        let z: f64 = StandardNormal.sample(rng);
        if z.abs() <= TRUNCATION_SIGMAS {
            return z * std;
        }
    }
}

/// Fresh parameters for `config`. Norm gains start at 1; every weight is
/// drawn from a truncated normal with the scheme's per-tensor deviation.
pub fn init_params<T: Element>(config: &ModelConfig, spec: &InitSpec) -> Result<ParamSet<T>, Error> {
    config.validate()?;
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut params = ParamSet::new();
    for (name, shape, slot) in config.param_layout() {
        let n: usize = shape.iter().product();
        let tensor = match slot {
            ParamSlot::Gain { .. } => Tensor::ones(&shape),
            ParamSlot::Weight { .. } => {
                let std = target_std(config, spec, slot);
                let data = (0..n).map(|_| T::cast_from(truncated_normal(&mut rng, std))).collect();
                Tensor::new(shape, data)?
            }
        };
        params.insert(name, ParamKind::from(slot), tensor)?;
    }
    Ok(params)
}
