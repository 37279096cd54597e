//! A short run on a small synthetic corpus, writing a run directory.
//!
//! `cargo run --release --example train_smoke -- [out_dir] [schedule]`

use prores::training::{train, TrainConfig, TrainData, TrainOptions};

fn main() -> Result<(), prores::Error> {
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "runs/smoke".into());
    let schedule = args.next().unwrap_or_else(|| "linear".into());
    let text = format!(
        "model.layers = 4\nmodel.d_model = 64\nmodel.n_heads = 4\nmodel.seq_len = 32\n\
         schedule.family = {schedule}\nschedule.T = 50\noptim.peak_lr = 0.003\noptim.total_steps = 300\n\
         optim.lr_warmup_steps = 30\ndata.synthetic_bytes = 400000\ndata.batch_size = 8\n\
         data.max_eval_samples = 256\ntrain.probe_every = 50\ntrain.eval_every = 100\n"
    );
    let cfg = TrainConfig::parse(&text)?;
    let data = TrainData::load(&cfg.data, cfg.model.seq_len, None)?;
    let opts = TrainOptions {
        out_dir: Some(out.clone().into()),
        probe_size: 8,
        ..Default::default()
    };
    let run = train::<f32>(&cfg, &data, opts)?;
    let first = run.records.first().map_or(f64::NAN, |r| r.train_loss);
    let last = run.records.last().map_or(f64::NAN, |r| r.train_loss);
    println!("status={} steps={} first_loss={first:.4} last_loss={last:.4}", run.status.name(), run.step);
    if let Some(e) = run.final_eval {
        println!("eval_loss={:.4} ppl={:.2}", e.loss, e.ppl);
    }
    println!("run directory: {out}");
    Ok(())
}
