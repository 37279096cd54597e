//! Central finite differences against backpropagation for one variant.
//!
//! `cargo run --example gradient_check -- [variant] [probes]`

use prores::model::{AlphaMode, Model, ModelConfig, VariantKind};
use prores::schedules::ScheduleFamily;

fn main() -> Result<(), prores::Error> {
    let mut args = std::env::args().skip(1);
    let kind: VariantKind = args.next().as_deref().unwrap_or("pre_ln").parse()?;
    let probes: usize = args.next().map_or(100, |s| s.parse().expect("probes must be an integer"));
    let mut cfg = ModelConfig::tiny(2).with_variant(kind).with_schedule(ScheduleFamily::Linear, 10)?;
    cfg.init.base_std = 0.3;
    let mut model = Model::<f64>::init(cfg)?;
    let inputs: Vec<usize> = (0..16).map(|i| (i * 5 + 1) % 32).collect();
    let targets: Vec<usize> = (0..16).map(|i| (i * 11 + 3) % 32).collect();
    let mode = AlphaMode::Step(5);
    let (_, grads) = model.loss_and_grads(&inputs, &targets, 2, mode)?;
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for p in 0..probes {
        let pi = p % model.params.len();
        let name = model.params.entry(pi).name.clone();
        let i = (p * 7919) % model.params.entry(pi).tensor.data().len();
        let orig = model.params.entry(pi).tensor.data()[i];
        let mut at = |v: f64| -> Result<f64, prores::Error> {
            model.params.get_mut(&name).expect("param").data_mut()[i] = v;
            model.loss(&inputs, &targets, 2, mode)
        };
        let numeric = (at(orig + h)? - at(orig - h)?) / (2.0 * h);
        at(orig)?;
        let analytic = grads[pi].data()[i];
        worst = worst.max((analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-7));
    }
    println!("variant={kind} probes={probes} worst_relative_error={worst:e}");
    Ok(())
}
