//! Spike scores of the loss and gradient-norm series in a `metrics.log`, or
//! of a synthetic series with injected jumps when no path is given.

use prores::diagnostics::{spike_flags, spike_score, SpikeConfig};
use prores::training::MetricsLog;

fn main() -> Result<(), prores::Error> {
    match std::env::args().nth(1) {
        Some(path) => {
            let log = MetricsLog::read(std::path::Path::new(&path))?;
            let cfg = SpikeConfig::fitted(log.records.len());
            for (name, s) in [("train_loss", log.series(|r| r.train_loss)), ("grad_norm", log.series(|r| r.grad_norm))] {
                println!("{name}: {:.3}% (window {})", spike_score(&s, &cfg)?, cfg.window);
            }
        }
        None => {
            let mut s: Vec<f64> = (0..4000).map(|i| 3.0 + 0.01 * ((i * 7919 % 101) as f64 / 101.0 - 0.5)).collect();
            for p in [1500, 2500, 3300] {
                s[p] += 1.0;
            }
            let cfg = SpikeConfig::default();
            let flags = spike_flags(&s, &cfg)?;
            let start = cfg.eligible(s.len()).start;
            let hits: Vec<usize> = flags.iter().enumerate().filter(|(_, &f)| f).map(|(i, _)| i + start).collect();
            println!("spikes at {hits:?}; score {:.4}%", spike_score(&s, &cfg)?);
        }
    }
    Ok(())
}
