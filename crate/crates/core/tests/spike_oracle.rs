//! The rolling spike detector against a direct per-point recomputation.

use proptest::prelude::*;
use prores::diagnostics::{spike_flags, spike_score, SpikeConfig};

mod common;
use common::{oracle_flags, synthetic_series};

#[test]
fn rolling_detector_agrees_with_oracle_flag_for_flag() {
    let series = synthetic_series();
    assert!(series.len() >= 20);
    for window in [1000, 250] {
        let cfg = SpikeConfig {
            window,
            ..SpikeConfig::default()
        };
        for (name, s) in &series {
            let got = spike_flags(s, &cfg).unwrap();
            let want = oracle_flags(s, window, cfg.threshold_sigmas, cfg.phase);
            assert_eq!(got, want, "{name} window {window}");
        }
    }
}

#[test]
fn constants_score_zero_and_injected_jumps_are_found() {
    let cfg = SpikeConfig::default();
    for (name, s) in synthetic_series() {
        let score = spike_score(&s, &cfg).unwrap();
        if name.starts_with("constant") {
            assert_eq!(score, 0.0, "{name}");
        }
        if name.starts_with("jumps") {
            let flags = spike_flags(&s, &cfg).unwrap();
            let start = cfg.eligible(s.len()).start;
            assert!(flags[1900 - start], "{name}: jump at 1900 missed");
        }
    }
}

fn series_strategy() -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-1000i32..1000, 120..400)
        .prop_map(|v| v.into_iter().map(f64::from).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matches_oracle_on_integer_series(s in series_strategy(), window in 2usize..60) {
        let cfg = SpikeConfig { window, threshold_sigmas: 3.0, phase: (0.0, 1.0) };
        prop_assume!(s.len() > window);
        prop_assert_eq!(spike_flags(&s, &cfg).unwrap(), oracle_flags(&s, window, 3.0, (0.0, 1.0)));
    }

    #[test]
    fn invariant_to_power_of_two_scaling(s in series_strategy(), e in -20i32..20) {
        let cfg = SpikeConfig { window: 30, threshold_sigmas: 2.5, phase: (0.0, 1.0) };
        let scaled: Vec<f64> = s.iter().map(|x| x * 2f64.powi(e)).collect();
        prop_assert_eq!(spike_flags(&s, &cfg).unwrap(), spike_flags(&scaled, &cfg).unwrap());
    }

    #[test]
    fn invariant_to_integer_shift(s in series_strategy(), c in -100_000i32..100_000) {
        let cfg = SpikeConfig { window: 30, threshold_sigmas: 2.5, phase: (0.0, 1.0) };
        let shifted: Vec<f64> = s.iter().map(|x| x + f64::from(c)).collect();
        prop_assert_eq!(spike_flags(&s, &cfg).unwrap(), spike_flags(&shifted, &cfg).unwrap());
    }
}
