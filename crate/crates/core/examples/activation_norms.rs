//! Per-layer activation norms at initialization, with and without a warmup
//! schedule, and after forcing every scale to 1.

use prores::data::{eval_batches, PackedDataset};
use prores::diagnostics::activation_norms;
use prores::model::{AlphaMode, Model, ModelConfig, VariantKind};
use prores::schedules::ScheduleFamily;

fn main() -> Result<(), prores::Error> {
    let tokens: Vec<u16> = b"the quick brown fox jumps over the lazy dog. ".iter().cycle().take(4000).map(|&b| b as u16).collect();
    let ds = PackedDataset::from_tokens(tokens, 32)?;
    let probe = eval_batches(&ds, &(0..8).collect::<Vec<_>>(), 8).remove(0);
    let cfg = ModelConfig::new(8, 64, 4, 257, 32, VariantKind::PreLn)?;
    for (label, family) in [("none", ScheduleFamily::None), ("linear", ScheduleFamily::Linear)] {
        let model = Model::<f32>::init(cfg.clone().with_schedule(family, 100)?)?;
        let norms = activation_norms(&model, &probe, AlphaMode::Step(0))?;
        let text: Vec<String> = norms.iter().map(|n| format!("{n:.4}")).collect();
        println!("{label:7} step 0: {}", text.join(" "));
    }
    Ok(())
}
