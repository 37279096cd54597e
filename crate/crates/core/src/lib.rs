//! Progressive residual warmup: per-layer, time-varying scaling of residual
//! branches in a decoder-only Transformer, with the training loop and
//! diagnostics needed to study it at small scale.

// `!(x >= 0.0)` rejects NaN as well; keep it.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::manual_is_multiple_of)]

pub mod cli;
pub mod data;
pub mod diagnostics;
pub mod init;
pub mod model;
pub mod optim;
pub mod report;
pub mod schedules;
pub mod training;

pub use prores_tensor as tensor;

use prores_tensor::KernelError;
use schedules::ScheduleError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite activation in layer {layer} at step {step}: {source}")]
    Activation {
        layer: usize,
        step: u64,
        source: KernelError,
    },
    #[error("non-finite gradient in `{param}` at step {step}")]
    NonFiniteGradient { param: String, step: u64 },
    #[error("data: {0}")]
    Data(String),
    #[error("malformed {what}: {reason}")]
    Format { what: &'static str, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
