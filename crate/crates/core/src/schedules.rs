//! Progressive residual warmup schedules.
//!
//! A schedule maps a block index `l` (1-based) and optimizer step `t` to the
//! scalar that multiplies that block's residual branches. All values are
//! computed in `f64` and are exactly `1.0` once a layer has finished warming up.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::report::sig6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("unknown schedule family `{0}`")]
    UnknownFamily(String),
    #[error("warmup length T must be >= 1")]
    ZeroWarmup,
    #[error("layer count L must be >= 1")]
    ZeroLayers,
    #[error("layer index {layer} outside 1..={layers}")]
    LayerOutOfRange { layer: usize, layers: usize },
    #[error("schedule table needs t_max >= 1 and stride >= 1")]
    BadTableRange,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScheduleFamily {
    Linear,
    LinearSqrt,
    LinearSquare,
    Equal,
    Reverse,
    Stagewise0,
    StagewiseL,
    StagewiseSqrtLayer,
    FixL,
    FixSqrtL,
    FixSqrtLayer,
    /// No residual scaling: the vanilla architecture.
    None,
}

impl ScheduleFamily {
    pub const ALL: [ScheduleFamily; 12] = [
        ScheduleFamily::Linear,
        ScheduleFamily::LinearSqrt,
        ScheduleFamily::LinearSquare,
        ScheduleFamily::Equal,
        ScheduleFamily::Reverse,
        ScheduleFamily::Stagewise0,
        ScheduleFamily::StagewiseL,
        ScheduleFamily::StagewiseSqrtLayer,
        ScheduleFamily::FixL,
        ScheduleFamily::FixSqrtL,
        ScheduleFamily::FixSqrtLayer,
        ScheduleFamily::None,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScheduleFamily::Linear => "linear",
            ScheduleFamily::LinearSqrt => "linear_sqrt",
            ScheduleFamily::LinearSquare => "linear_square",
            ScheduleFamily::Equal => "equal",
            ScheduleFamily::Reverse => "reverse",
            ScheduleFamily::Stagewise0 => "stagewise_0",
            ScheduleFamily::StagewiseL => "stagewise_L",
            ScheduleFamily::StagewiseSqrtLayer => "stagewise_sqrt_l",
            ScheduleFamily::FixL => "fix_L",
            ScheduleFamily::FixSqrtL => "fix_sqrt_L",
            ScheduleFamily::FixSqrtLayer => "fix_sqrt_l",
            ScheduleFamily::None => "none",
        }
    }

    /// Families whose value changes with `t` and reaches 1 after a finite warmup.
    pub fn is_warmup(self) -> bool {
        !matches!(
            self,
            ScheduleFamily::FixL
                | ScheduleFamily::FixSqrtL
                | ScheduleFamily::FixSqrtLayer
                | ScheduleFamily::None
        )
    }
}

impl fmt::Display for ScheduleFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for ScheduleFamily {
    type Err = ScheduleError;

    /// Case matters: `fix_sqrt_L` (total depth) and `fix_sqrt_l` (layer index)
    /// are different families. Hyphens are accepted in place of underscores.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().replace('-', "_");
        ScheduleFamily::ALL
            .into_iter()
            .find(|f| f.name() == norm)
            .ok_or_else(|| ScheduleError::UnknownFamily(s.to_string()))
    }
}

/// Which schedule, the first-layer warmup length `T`, and the depth `L`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleSpec {
    family: ScheduleFamily,
    warmup: u64,
    layers: usize,
}

impl ScheduleSpec {
    pub fn new(family: ScheduleFamily, warmup: u64, layers: usize) -> Result<Self, ScheduleError> {
        if warmup == 0 {
            return Err(ScheduleError::ZeroWarmup);
        }
        if layers == 0 {
            return Err(ScheduleError::ZeroLayers);
        }
        Ok(Self {
            family,
            warmup,
            layers,
        })
    }

    /// Baseline without residual scaling.
    pub fn none(layers: usize) -> Result<Self, ScheduleError> {
        Self::new(ScheduleFamily::None, 1, layers)
    }

    pub fn family(&self) -> ScheduleFamily {
        self.family
    }

    pub fn warmup(&self) -> u64 {
        self.warmup
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn with_layers(self, layers: usize) -> Result<Self, ScheduleError> {
        Self::new(self.family, self.warmup, layers)
    }

    /// Residual scale for block `layer` (1-based) at optimizer step `step`.
    pub fn alpha(&self, layer: usize, step: u64) -> Result<f64, ScheduleError> {
        if layer == 0 || layer > self.layers {
            return Err(ScheduleError::LayerOutOfRange {
                layer,
                layers: self.layers,
            });
        }
        let t = step as f64;
        let big_t = self.warmup as f64;
        let l = layer as f64;
        let depth = self.layers as f64;
        let ramp = |len: f64| (t / len).min(1.0);
        let stage = || ((t - big_t * (l - 1.0)) / big_t).clamp(0.0, 1.0);
        let lifted = |s: f64, floor: f64| {
            if s >= 1.0 {
                1.0
            } else {
                (floor + s * (1.0 - floor)).min(1.0)
            }
        };
        let value = match self.family {
            ScheduleFamily::Linear => ramp(big_t * l),
            ScheduleFamily::LinearSqrt => ramp(big_t * l).sqrt(),
            ScheduleFamily::LinearSquare => ramp(big_t * l).powi(2),
            ScheduleFamily::Equal => ramp(big_t),
            ScheduleFamily::Reverse => ramp(big_t * (depth - l + 1.0)),
            ScheduleFamily::Stagewise0 => stage(),
            ScheduleFamily::StagewiseL => lifted(stage(), 1.0 / depth),
            ScheduleFamily::StagewiseSqrtLayer => lifted(stage(), 1.0 / l.sqrt()),
            ScheduleFamily::FixL => 1.0 / depth,
            ScheduleFamily::FixSqrtL => 1.0 / depth.sqrt(),
            ScheduleFamily::FixSqrtLayer => 1.0 / l.sqrt(),
            ScheduleFamily::None => 1.0,
        };
        assert!(value.is_finite(), "non-finite schedule value");
        Ok(value)
    }

    /// Steps until every layer's scale is 1; `None` for static families.
    pub fn warmup_length(&self) -> Option<u64> {
        match self.family {
            ScheduleFamily::Equal => Some(self.warmup),
            f if f.is_warmup() => Some(self.warmup * self.layers as u64),
            _ => None,
        }
    }

    /// Scale for every block at `step`, index 0 holding block 1.
    pub fn alphas(&self, step: u64) -> Vec<f64> {
        (1..=self.layers)
            .map(|l| self.alpha(l, step).expect("layer in range"))
            .collect()
    }

    /// Dense `(t, l)` grid sampled at `0, stride, 2*stride, ...` up to and
    /// including `t_max`.
    pub fn table(&self, t_max: u64, stride: u64) -> Result<ScheduleTable, ScheduleError> {
        if t_max == 0 || stride == 0 {
            return Err(ScheduleError::BadTableRange);
        }
        let mut steps: Vec<u64> = (0..=t_max).step_by(stride as usize).collect();
        if steps.last() != Some(&t_max) {
            steps.push(t_max);
        }
        let values = steps.iter().map(|&t| self.alphas(t)).collect();
        Ok(ScheduleTable { steps, values })
    }
}

impl fmt::Display for ScheduleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(T={}, L={})", self.family, self.warmup, self.layers)
    }
}

/// Sampled schedule values, one row per step.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleTable {
    pub steps: Vec<u64>,
    pub values: Vec<Vec<f64>>,
}

impl ScheduleTable {
    /// Header `t,l1,...,lL`; values carry at least six significant digits.
    pub fn to_csv(&self) -> String {
        let layers = self.values.first().map_or(0, Vec::len);
        let mut out = String::from("t");
        for l in 1..=layers {
            out.push_str(&format!(",l{l}"));
        }
        out.push('\n');
        for (t, row) in self.steps.iter().zip(&self.values) {
            out.push_str(&t.to_string());
            for v in row {
                out.push(',');
                out.push_str(&sig6(*v));
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ScheduleFamily::*;

    fn spec(f: ScheduleFamily, t: u64, l: usize) -> ScheduleSpec {
        ScheduleSpec::new(f, t, l).unwrap()
    }

    #[test]
    fn linear_midway_through_layer_three() {
        assert_eq!(spec(Linear, 1000, 12).alpha(3, 1500).unwrap(), 0.5);
    }

    #[test]
    fn warmup_families_start_at_their_floor() {
        for l in 1..=12 {
            assert_eq!(spec(Linear, 77, 12).alpha(l, 0).unwrap(), 0.0);
        }
        assert_eq!(spec(Stagewise0, 1000, 12).alpha(2, 1000).unwrap(), 0.0);
        let s = spec(StagewiseL, 1000, 24);
        for l in 1..=24 {
            assert!((s.alpha(l, 0).unwrap() - 1.0 / 24.0).abs() < 1e-15);
            assert!((s.alpha(l, 0).unwrap() - 0.041_667).abs() < 1e-6);
        }
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn table_four_spot_values() {
        assert_eq!(spec(FixSqrtLayer, 1000, 12).alpha(4, 123).unwrap(), 0.5);
        let v = spec(LinearSqrt, 1000, 12).alpha(1, 500).unwrap();
        assert!((v - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((v - 0.707_11).abs() < 1e-5);
        assert_eq!(spec(Reverse, 1000, 12).alpha(12, 1000).unwrap(), 1.0);
        assert_eq!(spec(FixSqrtL, 1000, 16).alpha(3, 0).unwrap(), 0.25);
        assert_eq!(spec(LinearSquare, 1000, 4).alpha(2, 1000).unwrap(), 0.25);
        assert_eq!(spec(Equal, 1000, 4).alpha(4, 250).unwrap(), 0.25);
        assert_eq!(spec(FixL, 10, 8).alpha(5, 99).unwrap(), 0.125);
    }

    #[test]
    fn warmup_lengths() {
        assert_eq!(spec(Linear, 1000, 12).warmup_length(), Some(12_000));
        assert_eq!(spec(Equal, 1000, 48).warmup_length(), Some(1000));
        assert_eq!(spec(FixL, 1000, 12).warmup_length(), Option::None);
        assert_eq!(spec(None, 1000, 12).warmup_length(), Option::None);
        for f in [LinearSqrt, LinearSquare, Reverse, Stagewise0, StagewiseL, StagewiseSqrtLayer] {
            assert_eq!(spec(f, 10, 3).warmup_length(), Some(30), "{f}");
        }
    }

    #[test]
    fn layer_index_is_validated() {
        let s = spec(Linear, 10, 4);
        assert_eq!(
            s.alpha(0, 1),
            Err(ScheduleError::LayerOutOfRange { layer: 0, layers: 4 })
        );
        assert!(s.alpha(5, 1).is_err());
        assert_eq!(ScheduleSpec::new(Linear, 0, 4), Err(ScheduleError::ZeroWarmup));
        assert_eq!(ScheduleSpec::new(Linear, 1, 0), Err(ScheduleError::ZeroLayers));
    }

    #[test]
    fn family_names_round_trip_and_are_case_sensitive() {
        for f in ScheduleFamily::ALL {
            assert_eq!(f.name().parse::<ScheduleFamily>().unwrap(), f);
        }
        assert_eq!("fix_sqrt_L".parse::<ScheduleFamily>().unwrap(), FixSqrtL);
        assert_eq!("fix-sqrt-l".parse::<ScheduleFamily>().unwrap(), FixSqrtLayer);
        assert!("Linear".parse::<ScheduleFamily>().is_err());
    }

    #[test]
    fn schedule_table_shapes() {
        let t = spec(Linear, 1000, 12).table(12_000, 1000).unwrap();
        assert_eq!(t.steps.len(), 13);
        assert!(t.values.iter().all(|r| r.len() == 12));
        assert!(t.values.last().unwrap().iter().all(|&v| v == 1.0));

        let t = spec(None, 5, 3).table(40, 7).unwrap();
        assert_eq!(t.steps.last(), Some(&40));
        assert!(t.values.iter().flatten().all(|&v| v == 1.0));

        let t = spec(FixSqrtL, 1000, 16).table(5000, 500).unwrap();
        assert!(t.values.iter().flatten().all(|&v| v == 0.25));

        assert_eq!(spec(Linear, 1, 1).table(0, 1), Err(ScheduleError::BadTableRange));
    }

    #[test]
    fn csv_header_and_precision() {
        let csv = spec(Linear, 1000, 3).table(3000, 1500).unwrap().to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t,l1,l2,l3");
        assert_eq!(lines[1], "0,0.00000,0.00000,0.00000");
        assert_eq!(lines[2], "1500,1.00000,0.750000,0.500000");
        assert_eq!(lines.len(), 4);
    }
}
