//! Trains briefly, keeping checkpoints in memory, then reports how similar
//! each block's branch outputs are to the final ones at every checkpoint.

use prores::diagnostics::residual_evolution;
use prores::training::{train, TrainConfig, TrainData, TrainOptions};

fn main() -> Result<(), prores::Error> {
    let cfg = TrainConfig::parse(
        "model.layers = 4\nmodel.d_model = 32\nmodel.n_heads = 2\nmodel.seq_len = 32\n\
         schedule.family = linear\nschedule.T = 25\noptim.peak_lr = 0.003\noptim.total_steps = 200\n\
         optim.lr_warmup_steps = 20\ndata.synthetic_bytes = 200000\ndata.batch_size = 8\n\
         data.max_eval_samples = 64\n",
    )?;
    let data = TrainData::load(&cfg.data, cfg.model.seq_len, None)?;
    let run = train::<f32>(&cfg, &data, TrainOptions { keep_checkpoints: true, ..Default::default() })?;
    let last = run.checkpoints.last().expect("final checkpoint");
    let evo = residual_evolution(&run.checkpoints, last, &data.probe_batch(8))?;
    println!("probe {}", evo.probe_id);
    print!("{}", evo.to_csv());
    Ok(())
}
