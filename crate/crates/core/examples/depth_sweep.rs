//! Baseline against a warmup schedule at several depths on a small corpus.
//!
//! `cargo run --release --example depth_sweep -- [out_dir]`

use prores::diagnostics::{depth_sweep, Method};
use prores::training::{TrainConfig, TrainData};

fn main() -> Result<(), prores::Error> {
    let out = std::env::args().nth(1).map(std::path::PathBuf::from);
    let base = TrainConfig::parse(
        "model.d_model = 32\nmodel.n_heads = 2\nmodel.seq_len = 32\noptim.peak_lr = 0.01\n\
         optim.total_steps = 200\noptim.lr_warmup_steps = 10\ndata.synthetic_bytes = 200000\n\
         data.batch_size = 8\ndata.max_eval_samples = 64\n",
    )?;
    let data = TrainData::load(&base.data, base.model.seq_len, None)?;
    let methods = [Method::parse("none", 1)?, Method::parse("linear:20", 1)?];
    let table = depth_sweep::<f32>(&base, &[2, 4, 8], &methods, &data, out.as_deref())?;
    print!("{}", table.to_csv());
    Ok(())
}
