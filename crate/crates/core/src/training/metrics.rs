//! Line-delimited `key=value` metrics log.
//!
//! Step records carry `step`, `train_loss`, `grad_norm` (before clipping),
//! `lr`, `alpha_min`, `alpha_max`, `alphas` (per block, `;`-separated) and
//! `wall_ms`, plus `eval_loss` and `act_norms` on their cadences. Terminal
//! lines start with `event=` (`diverged`, `completed`, `aborted`).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{LineWriter, Write};
use std::path::Path;

use crate::data::write_atomic;
use crate::Error;

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub step: u64,
    pub train_loss: f64,
    pub grad_norm: f64,
    pub lr: f64,
    pub alphas: Vec<f64>,
    pub wall_ms: f64,
    pub eval_loss: Option<f64>,
    pub act_norms: Option<Vec<f64>>,
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

fn split_list(s: &str) -> Result<Vec<f64>, Error> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(';').map(|x| x.parse().map_err(|_| bad(format!("bad number `{x}`")))).collect()
}

fn bad(reason: String) -> Error {
    Error::Format {
        what: "metrics log",
        reason,
    }
}

impl MetricsRecord {
    pub fn alpha_min(&self) -> f64 {
        self.alphas.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn alpha_max(&self) -> f64 {
        self.alphas.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn to_line(&self) -> String {
        let mut s = format!(
            "step={} train_loss={} grad_norm={} lr={} alpha_min={} alpha_max={} alphas={} wall_ms={:.3}",
            self.step,
            self.train_loss,
            self.grad_norm,
            self.lr,
            self.alpha_min(),
            self.alpha_max(),
            join(&self.alphas),
            self.wall_ms
        );
        if let Some(e) = self.eval_loss {
            let _ = write!(s, " eval_loss={e}");
        }
        if let Some(a) = &self.act_norms {
            let _ = write!(s, " act_norms={}", join(a));
        }
        s
    }

    fn from_fields(f: &BTreeMap<&str, &str>) -> Result<Self, Error> {
        let num = |k: &str| -> Result<f64, Error> {
            f.get(k)
                .ok_or_else(|| bad(format!("missing `{k}`")))?
                .parse()
                .map_err(|_| bad(format!("bad `{k}`")))
        };
        Ok(Self {
            step: f
                .get("step")
                .ok_or_else(|| bad("missing `step`".into()))?
                .parse()
                .map_err(|_| bad("bad `step`".into()))?,
            train_loss: num("train_loss")?,
            grad_norm: num("grad_norm")?,
            lr: num("lr")?,
            alphas: split_list(f.get("alphas").copied().unwrap_or(""))?,
            wall_ms: num("wall_ms")?,
            eval_loss: f.get("eval_loss").map(|_| num("eval_loss")).transpose()?,
            act_norms: f.get("act_norms").map(|s| split_list(s)).transpose()?,
        })
    }
}

/// A terminal line such as `event=diverged step=812 reason=non_finite_loss`.
#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub kind: String,
    pub fields: BTreeMap<String, String>,
}

impl Event {
    pub fn new(kind: &str, fields: &[(&str, String)]) -> Self {
        Self {
            kind: kind.into(),
            fields: fields.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
        }
    }

    pub fn to_line(&self) -> String {
        let mut s = format!("event={}", self.kind);
        for (k, v) in &self.fields {
            let _ = write!(s, " {k}={v}");
        }
        s
    }
}

fn fields(line: &str) -> Result<BTreeMap<&str, &str>, Error> {
    line.split_whitespace()
        .map(|kv| kv.split_once('=').ok_or_else(|| bad(format!("token `{kv}` is not key=value"))))
        .collect()
}

/// Parsed log: step records in order, then any events.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsLog {
    pub records: Vec<MetricsRecord>,
    pub events: Vec<Event>,
}

impl MetricsLog {
    pub fn parse(text: &str) -> Result<Self, Error> {
        let mut log = Self::default();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let f = fields(line)?;
            if let Some(kind) = f.get("event") {
                log.events.push(Event {
                    kind: kind.to_string(),
                    fields: f
                        .iter()
                        .filter(|(k, _)| **k != "event")
                        .map(|(k, v)| (k.to_string(), v.to_string()))
                        .collect(),
                });
            } else {
                let r = MetricsRecord::from_fields(&f)?;
                if let Some(prev) = log.records.last() {
                    if r.step <= prev.step {
                        return Err(bad(format!("step {} after step {}", r.step, prev.step)));
                    }
                }
                log.records.push(r);
            }
        }
        Ok(log)
    }

    pub fn read(path: &Path) -> Result<Self, Error> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn series(&self, f: impl Fn(&MetricsRecord) -> f64) -> Vec<f64> {
        self.records.iter().map(f).collect()
    }
}

/// Appends complete lines to the log; each line is flushed as written.
pub struct MetricsSink {
    out: Option<LineWriter<fs::File>>,
}

impl MetricsSink {
    pub fn discard() -> Self {
        Self { out: None }
    }

    /// Opens `path` for appending, first dropping records at or after
    /// `resume_step` and all events left by an earlier attempt.
    pub fn open(path: &Path, resume_step: u64) -> Result<Self, Error> {
        if path.exists() {
            let kept: String = fs::read_to_string(path)?
                .lines()
                .filter(|l| {
                    fields(l)
                        .ok()
                        .filter(|f| !f.contains_key("event"))
                        .and_then(|f| f.get("step").and_then(|s| s.parse::<u64>().ok()))
                        .is_some_and(|s| s < resume_step)
                })
                .map(|l| format!("{l}\n"))
                .collect();
            write_atomic(path, kept.as_bytes())?;
        }
        let f = fs::OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            out: Some(LineWriter::new(f)),
        })
    }

    pub fn write_line(&mut self, line: &str) -> Result<(), Error> {
        if let Some(w) = &mut self.out {
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(step: u64) -> MetricsRecord {
        MetricsRecord {
            step,
            train_loss: 5.5 - step as f64 * 0.01,
            grad_norm: 1.0 / 3.0,
            lr: 1e-3,
            alphas: vec![0.5, 0.25],
            wall_ms: 12.0,
            eval_loss: (step == 2).then_some(4.0),
            act_norms: (step == 2).then(|| vec![1.0, 2.5, 3.25]),
        }
    }

    #[test]
    fn lines_round_trip() {
        let text: String = (0..3).map(|s| rec(s).to_line() + "\n").collect::<String>()
            + &Event::new("diverged", &[("step", "3".into()), ("reason", "non_finite_loss".into())]).to_line();
        let log = MetricsLog::parse(&text).unwrap();
        assert_eq!(log.records, (0..3).map(rec).collect::<Vec<_>>());
        assert_eq!(log.events[0].kind, "diverged");
        assert_eq!(log.events[0].fields["step"], "3");
        assert!(text.lines().next().unwrap().contains("alpha_min=0.25 alpha_max=0.5"));
    }

    #[test]
    fn non_increasing_steps_are_rejected() {
        let text = rec(2).to_line() + "\n" + &rec(2).to_line();
        assert!(MetricsLog::parse(&text).is_err());
    }

    #[test]
    fn reopening_drops_records_past_the_resume_point() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("metrics.log");
        let mut s = MetricsSink::open(&p, 0).unwrap();
        for i in 0..5 {
            s.write_line(&rec(i).to_line()).unwrap();
        }
        s.write_line("event=aborted step=5").unwrap();
        drop(s);
        let mut s = MetricsSink::open(&p, 3).unwrap();
        s.write_line(&rec(3).to_line()).unwrap();
        drop(s);
        let log = MetricsLog::read(&p).unwrap();
        assert_eq!(log.records.iter().map(|r| r.step).collect::<Vec<_>>(), [0, 1, 2, 3]);
        assert!(log.events.is_empty());
    }
}
