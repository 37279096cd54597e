//! Interrupts a run, resumes it from its checkpoint, and checks that the
//! result matches an uninterrupted run exactly.

use prores::training::{checkpoint_name, train, Checkpoint, TrainConfig, TrainData, TrainOptions};

fn main() -> Result<(), prores::Error> {
    let cfg = TrainConfig::parse(
        "model.layers = 2\nmodel.d_model = 32\nmodel.n_heads = 2\nmodel.seq_len = 16\n\
         schedule.family = linear\nschedule.T = 10\noptim.total_steps = 60\noptim.lr_warmup_steps = 6\n\
         data.synthetic_bytes = 100000\ndata.batch_size = 4\ndata.max_eval_samples = 32\n\
         train.checkpoint_every = 20\n",
    )?;
    let data = TrainData::load(&cfg.data, cfg.model.seq_len, None)?;
    let dir = std::env::temp_dir().join(format!("prores-resume-{}", std::process::id()));
    let straight = train::<f64>(&cfg, &data, TrainOptions::default())?;
    train::<f64>(&cfg, &data, TrainOptions { out_dir: Some(dir.clone()), stop_after: Some(20), ..Default::default() })?;
    let ck = Checkpoint::<f64>::load(&dir.join("checkpoints").join(checkpoint_name(20)))?;
    let resumed = train::<f64>(&cfg, &data, TrainOptions { out_dir: Some(dir.clone()), resume: Some(ck), ..Default::default() })?;
    let same_losses = straight.records[20..].iter().zip(&resumed.records).all(|(a, b)| a.train_loss.to_bits() == b.train_loss.to_bits());
    println!("identical losses after resume: {same_losses}");
    println!("identical final parameters: {}", straight.model.params == resumed.model.params);
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
