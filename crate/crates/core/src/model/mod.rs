//! Decoder-only Transformer with per-block residual scaling.

mod forward;
mod params;

use std::fmt;
use std::str::FromStr;

pub use forward::{block_forward, AlphaMode, BlockActivations, BlockOutput, BlockWeights, ForwardCtx, Model};
pub use params::{ParamEntry, ParamKind, ParamSet, ParamSlot};

use crate::init::{self, InitScheme, InitSpec};
use crate::schedules::{ScheduleFamily, ScheduleSpec};
use crate::Error;

/// Where normalization sits relative to the residual sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VariantKind {
    PreLn,
    PostLn,
    SandwichLn,
    DeepNorm,
    /// Pre-LN with the normalized input of block `l` divided by `sqrt(l)`.
    Lns,
}

impl VariantKind {
    pub const ALL: [VariantKind; 5] = [
        VariantKind::PreLn,
        VariantKind::PostLn,
        VariantKind::SandwichLn,
        VariantKind::DeepNorm,
        VariantKind::Lns,
    ];

    pub fn name(self) -> &'static str {
        match self {
            VariantKind::PreLn => "pre_ln",
            VariantKind::PostLn => "post_ln",
            VariantKind::SandwichLn => "sandwich_ln",
            VariantKind::DeepNorm => "deepnorm",
            VariantKind::Lns => "lns",
        }
    }

    /// Blocks that end in a norm need no extra norm before the head.
    pub fn default_final_norm(self) -> bool {
        !matches!(self, VariantKind::PostLn | VariantKind::DeepNorm)
    }

    /// The residual stream is left untouched when every branch is zero.
    pub fn has_identity_stream(self) -> bool {
        self.default_final_norm()
    }
}

impl fmt::Display for VariantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for VariantKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let norm = s.trim().replace('-', "_").to_ascii_lowercase();
        VariantKind::ALL
            .into_iter()
            .find(|v| v.name() == norm)
            .ok_or_else(|| Error::Config(format!("unknown variant `{s}`")))
    }
}

/// Block variant plus optional DeepNorm constants (derived from depth when unset).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerVariant {
    pub kind: VariantKind,
    pub deepnorm_alpha: Option<f64>,
    pub deepnorm_beta: Option<f64>,
}

impl LayerVariant {
    pub fn new(kind: VariantKind) -> Self {
        Self {
            kind,
            deepnorm_alpha: None,
            deepnorm_beta: None,
        }
    }
}

impl From<VariantKind> for LayerVariant {
    fn from(kind: VariantKind) -> Self {
        Self::new(kind)
    }
}

/// How schedule indices map onto residual branches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum AlphaIndexing {
    /// Attention and FFN of block `l` share `alpha(l, t)`.
    #[default]
    PerBlock,
    /// `2L` sub-residuals: attention of block `l` uses index `2l-1`, FFN `2l`.
    PerSublayer,
}

impl AlphaIndexing {
    pub fn name(self) -> &'static str {
        match self {
            AlphaIndexing::PerBlock => "block",
            AlphaIndexing::PerSublayer => "sublayer",
        }
    }
}

impl FromStr for AlphaIndexing {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.trim() {
            "block" => Ok(AlphaIndexing::PerBlock),
            "sublayer" => Ok(AlphaIndexing::PerSublayer),
            _ => Err(Error::Config(format!("unknown alpha indexing `{s}`"))),
        }
    }
}

/// SwiGLU hidden width: `8/3 * d_model` rounded to the nearest multiple of 8.
pub fn default_d_ff(d_model: usize) -> usize {
    let raw = 8.0 * d_model as f64 / 3.0;
    (((raw / 8.0).round() as usize).max(1)) * 8
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub vocab: usize,
    pub seq_len: usize,
    pub variant: LayerVariant,
    pub schedule: ScheduleSpec,
    pub alpha_indexing: AlphaIndexing,
    pub init: InitSpec,
    pub final_norm: bool,
    pub tied_embeddings: bool,
    pub norm_eps: f64,
    pub rope_theta: f64,
}

impl ModelConfig {
    /// Vanilla (schedule `none`) configuration with default-derived fields.
    pub fn new(
        layers: usize,
        d_model: usize,
        n_heads: usize,
        vocab: usize,
        seq_len: usize,
        kind: VariantKind,
    ) -> Result<Self, Error> {
        let init = InitSpec {
            scheme: if kind == VariantKind::DeepNorm {
                InitScheme::DeepNorm
            } else {
                InitScheme::Default
            },
            ..InitSpec::default()
        };
        let cfg = Self {
            layers,
            d_model,
            n_heads,
            d_ff: default_d_ff(d_model),
            vocab,
            seq_len,
            variant: kind.into(),
            schedule: ScheduleSpec::none(layers.max(1))?,
            alpha_indexing: AlphaIndexing::PerBlock,
            init,
            final_norm: kind.default_final_norm(),
            tied_embeddings: false,
            norm_eps: 1e-6,
            rope_theta: 10_000.0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Small pre-LN configuration used throughout the unit tests.
    pub fn tiny(layers: usize) -> Self {
        Self::new(layers, 16, 2, 32, 8, VariantKind::PreLn).expect("valid tiny config")
    }

    pub fn with_variant(mut self, kind: VariantKind) -> Self {
        self.variant = kind.into();
        self.final_norm = kind.default_final_norm();
        self.init.scheme = match (kind, self.init.scheme) {
            (VariantKind::DeepNorm, _) => InitScheme::DeepNorm,
            (_, InitScheme::DeepNorm) => InitScheme::Default,
            (_, s) => s,
        };
        self
    }

    pub fn with_schedule(mut self, family: ScheduleFamily, warmup: u64) -> Result<Self, Error> {
        self.schedule = ScheduleSpec::new(family, warmup, self.layers)?;
        Ok(self)
    }

    /// Change depth, keeping the schedule's family and `T`.
    pub fn with_layers(mut self, layers: usize) -> Result<Self, Error> {
        self.layers = layers;
        self.schedule = self.schedule.with_layers(layers)?;
        self.validate()?;
        Ok(self)
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads.max(1)
    }

    /// `(residual multiplier, sublayer init gain)` for DeepNorm blocks.
    pub fn deepnorm_constants(&self) -> (f64, f64) {
        (
            self.variant
                .deepnorm_alpha
                .unwrap_or_else(|| init::deepnorm_alpha(self.layers)),
            self.variant
                .deepnorm_beta
                .unwrap_or_else(|| init::deepnorm_beta(self.layers)),
        )
    }

    /// The schedule indexed the way the forward pass consumes it.
    pub fn effective_schedule(&self) -> ScheduleSpec {
        match self.alpha_indexing {
            AlphaIndexing::PerBlock => self.schedule,
            AlphaIndexing::PerSublayer => self
                .schedule
                .with_layers(2 * self.layers)
                .expect("non-zero layers"),
        }
    }

    /// `(attention, ffn)` scales for block `layer` (1-based) at `step`.
    pub fn block_alphas(&self, layer: usize, step: u64) -> Result<(f64, f64), Error> {
        let s = self.effective_schedule();
        Ok(match self.alpha_indexing {
            AlphaIndexing::PerBlock => {
                let a = s.alpha(layer, step)?;
                (a, a)
            }
            AlphaIndexing::PerSublayer => (s.alpha(2 * layer - 1, step)?, s.alpha(2 * layer, step)?),
        })
    }

    /// Steps until every residual scale is exactly 1.
    pub fn warmup_length(&self) -> Option<u64> {
        self.effective_schedule().warmup_length()
    }

    pub fn validate(&self) -> Result<(), Error> {
        let bad = |m: String| Err(Error::Config(m));
        if self.layers == 0 || self.d_model == 0 || self.n_heads == 0 {
            return bad("layers, d_model and n_heads must be positive".into());
        }
        if self.d_model % self.n_heads != 0 {
            return bad(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        if self.head_dim() % 2 != 0 {
            return bad(format!("head dim {} must be even for RoPE", self.head_dim()));
        }
        if self.d_ff == 0 || self.vocab < 2 || self.seq_len == 0 {
            return bad("d_ff, seq_len must be positive and vocab >= 2".into());
        }
        if self.schedule.layers() != self.layers {
            return bad(format!(
                "schedule depth {} != model depth {}",
                self.schedule.layers(),
                self.layers
            ));
        }
        if !(self.norm_eps >= 0.0) || !(self.rope_theta > 0.0) {
            return bad("norm_eps must be >= 0 and rope_theta > 0".into());
        }
        for c in [self.variant.deepnorm_alpha, self.variant.deepnorm_beta].into_iter().flatten() {
            if !(c > 0.0 && c.is_finite()) {
                return bad(format!("deepnorm constants must be positive, got {c}"));
            }
        }
        self.init.validate()
    }

    /// Ordered `(name, shape, slot)` for every parameter tensor.
    pub fn param_layout(&self) -> Vec<(String, Vec<usize>, ParamSlot)> {
        let (d, v, f) = (self.d_model, self.vocab, self.d_ff);
        let sandwich = self.variant.kind == VariantKind::SandwichLn;
        let weight = |layer: Option<usize>, residual_out: bool, deepnorm_scaled: bool| ParamSlot::Weight {
            layer,
            residual_out,
            deepnorm_scaled,
            decay: true,
        };
        let mut out = vec![(
            "embed".to_string(),
            vec![v, d],
            ParamSlot::Weight {
                layer: None,
                residual_out: false,
                deepnorm_scaled: false,
                decay: false,
            },
        )];
        for l in 1..=self.layers {
            let p = format!("blocks.{}", l - 1);
            let gain = ParamSlot::Gain { layer: Some(l) };
            out.push((format!("{p}.attn_norm"), vec![d], gain));
            if sandwich {
                out.push((format!("{p}.attn_out_norm"), vec![d], gain));
            }
            out.push((format!("{p}.attn.wq"), vec![d, d], weight(Some(l), false, false)));
            out.push((format!("{p}.attn.wk"), vec![d, d], weight(Some(l), false, false)));
            out.push((format!("{p}.attn.wv"), vec![d, d], weight(Some(l), false, true)));
            out.push((format!("{p}.attn.wo"), vec![d, d], weight(Some(l), true, true)));
            out.push((format!("{p}.ffn_norm"), vec![d], gain));
            if sandwich {
                out.push((format!("{p}.ffn_out_norm"), vec![d], gain));
            }
            out.push((format!("{p}.ffn.w_gate"), vec![d, f], weight(Some(l), false, true)));
            out.push((format!("{p}.ffn.w_up"), vec![d, f], weight(Some(l), false, true)));
            out.push((format!("{p}.ffn.w_down"), vec![f, d], weight(Some(l), true, true)));
        }
        if self.final_norm {
            out.push(("final_norm".into(), vec![d], ParamSlot::Gain { layer: None }));
        }
        if !self.tied_embeddings {
            out.push(("head".into(), vec![d, v], weight(None, false, false)));
        }
        out
    }
}
