use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpikeConfig {
    /// Number of preceding points forming the reference window.
    pub window: usize,
    pub threshold_sigmas: f64,
    /// Fraction of the series, `[lo, hi)`, that is scored.
    pub phase: (f64, f64),
}

impl Default for SpikeConfig {
    fn default() -> Self {
        Self {
            window: 1000,
            threshold_sigmas: 7.0,
            phase: (0.10, 0.90),
        }
    }
}

impl SpikeConfig {
    pub fn validate(&self) -> Result<(), Error> {
        let (lo, hi) = self.phase;
        if self.window < 2 || !(self.threshold_sigmas > 0.0) || !(0.0 <= lo && lo < hi && hi <= 1.0) {
            return Err(Error::Config(format!("invalid spike config {self:?}")));
        }
        Ok(())
    }

    /// Indices that are scored: inside the phase and with a full window.
    pub fn eligible(&self, n: usize) -> std::ops::Range<usize> {
        let lo = ((self.phase.0 * n as f64).ceil() as usize).max(self.window);
        let hi = ((self.phase.1 * n as f64).ceil() as usize).min(n);
        lo..hi.max(lo)
    }

    /// Default settings with the window shrunk to fit short runs.
    pub fn fitted(n: usize) -> Self {
        let d = Self::default();
        Self {
            window: d.window.min((n / 4).max(2)),
            ..d
        }
    }
}

/// Reference statistics of one window, computed directly in two passes.
fn exact_stats(w: &[f64]) -> (f64, f64) {
    let n = w.len() as f64;
    let mean = w.iter().sum::<f64>() / n;
    let var = w.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn is_spike(x: f64, mean: f64, std: f64, k: f64) -> bool {
    if std == 0.0 {
        return x != mean;
    }
    (x - mean).abs() >= k * std
}

/// Per-index spike flags over the eligible range.
///
/// Window sums are kept relative to a reference value and rebuilt every
/// `window` steps, so drift stays bounded; verdicts that land within
/// rounding distance of the threshold are settled with exact window
/// statistics.
pub fn spike_flags(series: &[f64], cfg: &SpikeConfig) -> Result<Vec<bool>, Error> {
    cfg.validate()?;
    let n = series.len();
    let range = cfg.eligible(n);
    if n <= cfg.window || range.is_empty() {
        return Err(Error::Data(format!(
            "series of {n} points is too short for a {}-step window",
            cfg.window
        )));
    }
    if let Some(i) = series.iter().position(|x| !x.is_finite()) {
        return Err(Error::Data(format!("non-finite value at index {i}")));
    }
    let w = cfg.window;
    let wf = w as f64;
    let k = cfg.threshold_sigmas;
    let mut flags = Vec::with_capacity(range.len());
    let (mut reference, mut s1, mut s2) = (0.0, 0.0, 0.0);
    let mut built_at = usize::MAX;
    for i in range {
        if built_at == usize::MAX || i - built_at >= w {
            reference = series[i - w];
            s1 = 0.0;
            s2 = 0.0;
            for &x in &series[i - w..i] {
                let d = x - reference;
                s1 += d;
                s2 += d * d;
            }
            built_at = i;
        } else {
            let (add, drop) = (series[i - 1] - reference, series[i - w - 1] - reference);
            s1 += add - drop;
            s2 += add * add - drop * drop;
        }
        let mean_d = s1 / wf;
        let var = (s2 / wf - mean_d * mean_d).max(0.0);
        let (mean, std) = (reference + mean_d, var.sqrt());
        let x = series[i];
        let scale = x.abs().max(mean.abs()).max(1e-300);
        let margin = ((x - mean).abs() - k * std).abs();
        let fragile = std <= 1e-7 * scale || margin <= 1e-7 * (k * std + scale * 1e-9);
        let flag = if fragile {
            let (m, s) = exact_stats(&series[i - w..i]);
            is_spike(x, m, s, k)
        } else {
            is_spike(x, mean, std, k)
        };
        flags.push(flag);
    }
    Ok(flags)
}

/// Percentage of eligible points at least `threshold_sigmas` standard
/// deviations from the mean of the preceding `window` points.
pub fn spike_score(series: &[f64], cfg: &SpikeConfig) -> Result<f64, Error> {
    let flags = spike_flags(series, cfg)?;
    let hits = flags.iter().filter(|&&f| f).count();
    Ok(100.0 * hits as f64 / flags.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_series_scores_zero() {
        let cfg = SpikeConfig::default();
        for c in [0.0, 1.0, 5.545_177_444_479_562, -3.3e7] {
            assert_eq!(spike_score(&vec![c; 5000], &cfg).unwrap(), 0.0);
        }
    }

    #[test]
    fn step_after_flat_window_is_a_spike() {
        let cfg = SpikeConfig {
            window: 10,
            threshold_sigmas: 7.0,
            phase: (0.0, 1.0),
        };
        let mut s = vec![2.0; 40];
        s[25] = 2.0 + 1e-12;
        let flags = spike_flags(&s, &cfg).unwrap();
        assert!(flags[25 - 10]);
        // Every later window contains the blip, so nothing else is flagged.
        assert_eq!(flags.iter().filter(|&&f| f).count(), 1);
    }

    #[test]
    fn eligible_range_respects_phase_and_window() {
        let cfg = SpikeConfig::default();
        assert_eq!(cfg.eligible(3000), 1000..2700);
        assert_eq!(cfg.eligible(20_000), 2000..18_000);
        assert!(spike_score(&vec![1.0; 1000], &cfg).is_err());
        assert!(spike_score(&vec![1.0; 1100], &cfg).is_err());
        assert_eq!(SpikeConfig::fitted(200).window, 50);
    }

    #[test]
    fn rejects_bad_config_and_values() {
        let c = SpikeConfig {
            window: 1,
            ..SpikeConfig::default()
        };
        assert!(c.validate().is_err());
        let mut s = vec![1.0; 3000];
        s[5] = f64::NAN;
        assert!(spike_score(&s, &SpikeConfig::default()).is_err());
    }
}
