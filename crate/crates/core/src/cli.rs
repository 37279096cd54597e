//! Command-line front end: `train`, `eval`, `diagnose`, `plot-schedules`,
//! `sweep-depth` and `sweep-schedule`.
//!
//! Failures print one `status=error kind=<kind> message="<text>"` line on
//! stderr and exit non-zero. A diverged run is a result, not a failure: it
//! exits 0 with `status=diverged`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use prores_tensor::{DType, Element};

use crate::diagnostics::{
    activation_norms, depth_sweep, norms_csv, residual_evolution, schedule_sweep, spike_flags, Method, SpikeConfig,
};
use crate::model::AlphaMode;
use crate::report::{sig6, Csv};
use crate::schedules::{ScheduleFamily, ScheduleSpec};
use crate::training::{
    checkpoint_dtype, evaluate, parse_override, train, Checkpoint, MetricsLog, RunStatus, TrainConfig, TrainData,
    TrainOptions,
};
use crate::Error;

/// Environment variable naming the packed-corpus cache directory.
pub const DATA_DIR_ENV: &str = "PRORES_DATA_DIR";

#[derive(Debug, Parser)]
#[command(name = "prores", version, about = "Progressive residual warmup laboratory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// Plain-text `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one config key; repeatable, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Shorthand for `--set schedule.family=...`.
    #[arg(long)]
    pub schedule: Option<String>,
    /// Shorthand for `--set schedule.T=...`.
    #[arg(long = "T", value_name = "STEPS")]
    pub warmup: Option<u64>,
    /// Shorthand for `--set train.seed=...`.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<TrainConfig, Error> {
        let mut overrides = Vec::new();
        for s in &self.set {
            overrides.push(parse_override(s)?);
        }
        if let Some(s) = &self.schedule {
            overrides.push(("schedule.family".into(), s.clone()));
        }
        if let Some(t) = self.warmup {
            overrides.push(("schedule.T".into(), t.to_string()));
        }
        if let Some(s) = self.seed {
            overrides.push(("train.seed".into(), s.to_string()));
        }
        TrainConfig::load(self.config.as_deref(), &overrides)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one run into a run directory.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out_dir: PathBuf,
        /// Continue the run in `--out-dir` from its latest checkpoint.
        #[arg(long)]
        resume: bool,
    },
    /// Evaluate a checkpoint on the eval split of its (or the given) corpus.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Corpus sources replacing the checkpoint's own, comma-separated.
        #[arg(long)]
        data: Option<String>,
        /// Evaluate with every residual scale forced to 1.
        #[arg(long)]
        alpha_one: bool,
        /// Append the CSV row here instead of printing it.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Spike, activation-norm and residual-evolution CSVs for a run directory.
    Diagnose {
        #[arg(long)]
        run_dir: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        spike_window: usize,
    },
    /// Residual-scale table for one schedule.
    PlotSchedules {
        #[arg(long, alias = "schedule")]
        family: String,
        #[arg(long = "T", value_name = "STEPS")]
        warmup: u64,
        #[arg(long = "L", value_name = "LAYERS")]
        layers: usize,
        #[arg(long)]
        t_max: u64,
        /// Row spacing; defaults to `T`.
        #[arg(long)]
        stride: Option<u64>,
        /// Also write a line chart as SVG.
        #[arg(long)]
        svg: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Methods × depths comparison table.
    SweepDepth {
        #[command(flatten)]
        config: ConfigArgs,
        /// Comma-separated depths.
        #[arg(long, value_delimiter = ',')]
        depths: Vec<usize>,
        /// Comma-separated `family[:T]` methods.
        #[arg(long, value_delimiter = ',', default_value = "none,linear")]
        schedules: Vec<String>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Schedule families × first-layer warmup lengths at a fixed depth.
    SweepSchedule {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, value_delimiter = ',', default_value = "linear,equal,reverse")]
        schedules: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        warmups: Vec<u64>,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

/// Metadata that makes a run directory self-describing.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub run_id: String,
    pub config: TrainConfig,
    pub corpus_hash: String,
    pub build: String,
    pub started_unix: u64,
    pub ended_unix: Option<u64>,
    pub status: Option<RunStatus>,
    pub final_step: u64,
    pub eval_loss: Option<f64>,
}

const MANIFEST: &str = "manifest.txt";

fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

pub fn build_id() -> String {
    format!(
        "prores-{}{}",
        env!("CARGO_PKG_VERSION"),
        option_env!("PRORES_BUILD_ID").map(|b| format!("+{b}")).unwrap_or_default()
    )
}

impl RunManifest {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "run_id = {}", self.run_id);
        let _ = writeln!(s, "status = {}", self.status.map_or("running", RunStatus::name));
        let _ = writeln!(s, "corpus_hash = {}", self.corpus_hash);
        let _ = writeln!(s, "build = {}", self.build);
        let _ = writeln!(s, "started_unix = {}", self.started_unix);
        if let Some(e) = self.ended_unix {
            let _ = writeln!(s, "ended_unix = {e}");
        }
        let _ = writeln!(s, "final_step = {}", self.final_step);
        if let Some(l) = self.eval_loss {
            let _ = writeln!(s, "eval_loss = {l}");
        }
        s.push_str("[config]\n");
        s.push_str(&self.config.to_text());
        s
    }

    pub fn parse(text: &str) -> Result<Self, Error> {
        let (head, config) = text
            .split_once("[config]\n")
            .ok_or_else(|| Error::Format { what: "manifest", reason: "missing [config] section".into() })?;
        let field = |k: &str| {
            head.lines()
                .find_map(|l| l.split_once(" = ").filter(|(a, _)| *a == k).map(|(_, b)| b.trim().to_string()))
        };
        let req = |k: &str| field(k).ok_or_else(|| Error::Format { what: "manifest", reason: format!("missing `{k}`") });
        let status = match field("status").as_deref() {
            Some("completed") => Some(RunStatus::Completed),
            Some("diverged") => Some(RunStatus::Diverged),
            Some("aborted") => Some(RunStatus::Aborted),
            _ => None,
        };
        let num = |k: &str| -> Result<u64, Error> {
            req(k)?.parse().map_err(|_| Error::Format { what: "manifest", reason: format!("bad `{k}`") })
        };
        Ok(Self {
            run_id: req("run_id")?,
            config: TrainConfig::parse(config)?,
            corpus_hash: req("corpus_hash")?,
            build: req("build")?,
            started_unix: num("started_unix")?,
            ended_unix: field("ended_unix").and_then(|v| v.parse().ok()),
            status,
            final_step: num("final_step")?,
            eval_loss: field("eval_loss").and_then(|v| v.parse().ok()),
        })
    }

    pub fn read(run_dir: &Path) -> Result<Self, Error> {
        let p = run_dir.join(MANIFEST);
        let text = fs::read_to_string(&p).map_err(|e| Error::Data(format!("cannot read {}: {e}", p.display())))?;
        Self::parse(&text)
    }

    pub fn write(&self, run_dir: &Path) -> Result<(), Error> {
        fs::create_dir_all(run_dir)?;
        crate::data::write_atomic(&run_dir.join(MANIFEST), self.to_text().as_bytes())
    }
}

fn cache_dir() -> Option<PathBuf> {
    std::env::var_os(DATA_DIR_ENV).map(PathBuf::from)
}

fn load_data(config: &TrainConfig) -> Result<TrainData, Error> {
    TrainData::load(&config.data, config.model.seq_len, cache_dir().as_deref())
}

/// Checkpoints of a run directory, sorted by step.
pub fn list_checkpoints(run_dir: &Path) -> Result<Vec<PathBuf>, Error> {
    let dir = run_dir.join("checkpoints");
    let mut v: Vec<PathBuf> = match fs::read_dir(&dir) {
        Ok(rd) => rd
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "prck"))
            .collect(),
        Err(_) => Vec::new(),
    };
    v.sort();
    Ok(v)
}

fn cmd_train_typed<T: Element>(config: TrainConfig, out_dir: &Path, resume: bool) -> Result<String, Error> {
    let data = load_data(&config)?;
    let mut options = TrainOptions::<T> {
        out_dir: Some(out_dir.to_path_buf()),
        probe_size: config.data.eval_batch_size,
        ..Default::default()
    };
    let mut manifest = if resume {
        let m = RunManifest::read(out_dir)?;
        if m.corpus_hash != data.corpus_hash {
            return Err(Error::Data("corpus changed since the run started".into()));
        }
        let last = list_checkpoints(out_dir)?
            .pop()
            .ok_or_else(|| Error::Data(format!("no checkpoints in {}", out_dir.display())))?;
        options.resume = Some(Checkpoint::load(&last)?);
        m
    } else {
        if out_dir.join(MANIFEST).exists() {
            return Err(Error::Config(format!(
                "{} already holds a run; pass --resume or choose another --out-dir",
                out_dir.display()
            )));
        }
        let started = now_unix();
        let text = config.to_text();
        let digest = text.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3));
        RunManifest {
            run_id: format!("{started}-{:08x}", digest as u32),
            config: config.clone(),
            corpus_hash: data.corpus_hash.clone(),
            build: build_id(),
            started_unix: started,
            ended_unix: None,
            status: None,
            final_step: 0,
            eval_loss: None,
        }
    };
    manifest.write(out_dir)?;
    let probe = data.probe_batch(config.data.eval_batch_size);
    fs::write(
        out_dir.join("probe.txt"),
        probe.indices.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(",") + "\n",
    )?;
    let out = train::<T>(&manifest.config, &data, options)?;
    manifest.ended_unix = Some(now_unix());
    manifest.status = Some(out.status);
    manifest.final_step = out.step;
    manifest.eval_loss = out.final_eval.map(|e| e.loss);
    manifest.write(out_dir)?;
    let mut line = format!("status={} run_id={} step={}", out.status.name(), manifest.run_id, out.step);
    if let Some(e) = out.final_eval {
        let _ = write!(line, " eval_loss={} ppl={}", e.loss, e.ppl);
    }
    if let Some(d) = out.divergence {
        let _ = write!(line, " diverged_at={}", d.step);
    }
    Ok(line)
}

pub fn cmd_train(config: &ConfigArgs, out_dir: &Path, resume: bool) -> Result<String, Error> {
    let cfg = if resume { RunManifest::read(out_dir)?.config } else { config.resolve()? };
    match cfg.dtype {
        DType::F32 => cmd_train_typed::<f32>(cfg, out_dir, resume),
        DType::F64 => cmd_train_typed::<f64>(cfg, out_dir, resume),
    }
}

fn cmd_eval_typed<T: Element>(path: &Path, data_override: Option<&str>, alpha_one: bool) -> Result<(u64, f64, f64), Error> {
    let ck = Checkpoint::<T>::load(path)?;
    let mut cfg = ck.config.clone();
    if let Some(d) = data_override {
        cfg.data.sources = d.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
    }
    let data = load_data(&cfg)?;
    let mode = if alpha_one { AlphaMode::Fixed(1.0) } else { AlphaMode::Step(ck.step) };
    let e = evaluate(&ck.model()?, &data, cfg.data.eval_batch_size, cfg.data.max_eval_samples, mode)?;
    Ok((ck.step, e.loss, e.ppl))
}

pub fn cmd_eval(path: &Path, data: Option<&str>, alpha_one: bool, out_dir: Option<&Path>) -> Result<String, Error> {
    let (step, loss, ppl) = match checkpoint_dtype(path)? {
        DType::F32 => cmd_eval_typed::<f32>(path, data, alpha_one)?,
        DType::F64 => cmd_eval_typed::<f64>(path, data, alpha_one)?,
    };
    let row = format!("{},{step},{},{}", path.display(), sig6(loss), sig6(ppl));
    if let Some(d) = out_dir {
        fs::create_dir_all(d)?;
        let p = d.join("eval.csv");
        let mut text = fs::read_to_string(&p).unwrap_or_else(|_| "checkpoint,step,eval_loss,ppl\n".into());
        text.push_str(&row);
        text.push('\n');
        fs::write(&p, text)?;
    }
    Ok(format!("eval_loss={loss} ppl={ppl} step={step}\ncheckpoint,step,eval_loss,ppl\n{row}"))
}

fn spike_rows(log: &MetricsLog, window: usize) -> Result<String, Error> {
    let mut csv = Csv::new(["series", "window", "threshold_sigmas", "eligible", "flagged", "spike_score"]);
    let n = log.records.len();
    let cfg = SpikeConfig {
        window: window.min((n / 4).max(2)),
        ..SpikeConfig::default()
    };
    for (name, s) in [
        ("train_loss", log.series(|r| r.train_loss)),
        ("grad_norm", log.series(|r| r.grad_norm)),
    ] {
        match spike_flags(&s, &cfg) {
            Ok(f) => {
                let hits = f.iter().filter(|&&x| x).count();
                csv.push(vec![
                    name.into(),
                    cfg.window.to_string(),
                    sig6(cfg.threshold_sigmas),
                    f.len().to_string(),
                    hits.to_string(),
                    sig6(100.0 * hits as f64 / f.len() as f64),
                ]);
            }
            Err(_) => csv.push(vec![
                name.into(),
                cfg.window.to_string(),
                sig6(cfg.threshold_sigmas),
                "0".into(),
                "0".into(),
                "NaN".into(),
            ]),
        }
    }
    Ok(csv.render())
}

fn cmd_diagnose_typed<T: Element>(run_dir: &Path, out: &Path, window: usize) -> Result<Vec<PathBuf>, Error> {
    let manifest = RunManifest::read(run_dir)?;
    let log = MetricsLog::read(&run_dir.join("metrics.log"))?;
    let mut written = Vec::new();
    fs::create_dir_all(out)?;
    let spike = out.join("spike.csv");
    fs::write(&spike, spike_rows(&log, window)?)?;
    written.push(spike);

    let data = load_data(&manifest.config)?;
    let probe = data.probe_batch(manifest.config.data.eval_batch_size);
    let paths = list_checkpoints(run_dir)?;
    let cks = paths.iter().map(|p| Checkpoint::<T>::load(p)).collect::<Result<Vec<_>, _>>()?;
    let mut norms = Vec::new();
    for ck in &cks {
        norms.push((ck.step, activation_norms(&ck.model()?, &probe, AlphaMode::Step(ck.step))?));
    }
    let np = out.join("norms.csv");
    fs::write(&np, norms_csv(&norms))?;
    written.push(np);
    if let Some(last) = cks.last() {
        let evo = residual_evolution(&cks, last, &probe)?;
        let ep = out.join("evolution.csv");
        fs::write(&ep, evo.to_csv())?;
        written.push(ep);
    }
    Ok(written)
}

pub fn cmd_diagnose(run_dir: &Path, out_dir: Option<&Path>, window: usize) -> Result<String, Error> {
    let out = out_dir.map_or_else(|| run_dir.join("diagnostics"), Path::to_path_buf);
    let first = list_checkpoints(run_dir)?.into_iter().next();
    let dtype = match first {
        Some(p) => checkpoint_dtype(&p)?,
        None => DType::F32,
    };
    let files = match dtype {
        DType::F32 => cmd_diagnose_typed::<f32>(run_dir, &out, window)?,
        DType::F64 => cmd_diagnose_typed::<f64>(run_dir, &out, window)?,
    };
    Ok(files.iter().map(|p| format!("wrote {}", p.display())).collect::<Vec<_>>().join("\n"))
}

/// Polyline chart of every layer's scale over time.
pub fn schedule_svg(table: &crate::schedules::ScheduleTable) -> String {
    let (w, h, pad) = (640.0, 360.0, 40.0);
    let t_max = *table.steps.last().unwrap_or(&1) as f64;
    let x = |t: u64| pad + (w - 2.0 * pad) * t as f64 / t_max.max(1.0);
    let y = |a: f64| h - pad - (h - 2.0 * pad) * a;
    let layers = table.values.first().map_or(0, Vec::len);
    let mut s = format!("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\">\n");
    let _ = writeln!(
        s,
        "<rect x=\"{pad}\" y=\"{pad}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#888\"/>",
        w - 2.0 * pad,
        h - 2.0 * pad
    );
    for l in 0..layers {
        let hue = 360.0 * l as f64 / layers.max(1) as f64;
        let pts: Vec<String> = table
            .steps
            .iter()
            .zip(&table.values)
            .map(|(&t, row)| format!("{:.2},{:.2}", x(t), y(row[l])))
            .collect();
        let _ = writeln!(
            s,
            "<polyline fill=\"none\" stroke=\"hsl({hue:.0},70%,45%)\" points=\"{}\"/>",
            pts.join(" ")
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn cmd_plot_schedules(
    family: &str,
    warmup: u64,
    layers: usize,
    t_max: u64,
    stride: Option<u64>,
    svg: Option<&Path>,
    out_dir: Option<&Path>,
) -> Result<String, Error> {
    let family: ScheduleFamily = family.parse()?;
    let spec = ScheduleSpec::new(family, warmup, layers)?;
    let table = spec.table(t_max, stride.unwrap_or(warmup).max(1))?;
    let csv = table.to_csv();
    if let Some(p) = svg {
        fs::write(p, schedule_svg(&table))?;
    }
    match out_dir {
        Some(d) => {
            fs::create_dir_all(d)?;
            let p = d.join(format!("schedule-{family}-T{warmup}-L{layers}.csv"));
            fs::write(&p, &csv)?;
            Ok(format!("wrote {}", p.display()))
        }
        None => Ok(csv.trim_end().to_string()),
    }
}

pub fn cmd_sweep_depth(config: &ConfigArgs, depths: &[usize], schedules: &[String], out_dir: &Path) -> Result<String, Error> {
    let cfg = config.resolve()?;
    if depths.is_empty() {
        return Err(Error::Config("--depths needs at least one depth".into()));
    }
    let methods = schedules
        .iter()
        .map(|s| Method::parse(s, cfg.model.schedule.warmup()))
        .collect::<Result<Vec<_>, _>>()?;
    let data = load_data(&cfg)?;
    let table = match cfg.dtype {
        DType::F32 => depth_sweep::<f32>(&cfg, depths, &methods, &data, Some(out_dir))?,
        DType::F64 => depth_sweep::<f64>(&cfg, depths, &methods, &data, Some(out_dir))?,
    };
    let csv = table.to_csv();
    fs::write(out_dir.join("sweep-depth.csv"), &csv)?;
    Ok(csv.trim_end().to_string())
}

pub fn cmd_sweep_schedule(config: &ConfigArgs, schedules: &[String], warmups: &[u64], out_dir: &Path) -> Result<String, Error> {
    let cfg = config.resolve()?;
    let families = schedules
        .iter()
        .map(|s| s.parse::<ScheduleFamily>().map_err(Error::from))
        .collect::<Result<Vec<_>, _>>()?;
    let warmups = if warmups.is_empty() { vec![cfg.model.schedule.warmup()] } else { warmups.to_vec() };
    let data = load_data(&cfg)?;
    let table = match cfg.dtype {
        DType::F32 => schedule_sweep::<f32>(&cfg, &families, &warmups, &data, Some(out_dir))?,
        DType::F64 => schedule_sweep::<f64>(&cfg, &families, &warmups, &data, Some(out_dir))?,
    };
    let mut out = table.to_csv();
    fs::write(out_dir.join("sweep-schedule.csv"), &out)?;
    // Ordering check per warmup: linear <= equal <= reverse in perplexity.
    for &t in &warmups {
        let ppl = |f: &str| table.rows.iter().find(|r| r.schedule == f && r.warmup == t).map(|r| r.ppl);
        if let (Some(l), Some(e), Some(r)) = (ppl("linear"), ppl("equal"), ppl("reverse")) {
            let _ = writeln!(out, "# T={t} ordering linear<=equal<=reverse: {}", l <= e && e <= r);
        }
    }
    Ok(out.trim_end().to_string())
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Config(_) | Error::Schedule(_) => "config",
        Error::Io(_) => "io",
        Error::Data(_) => "data",
        Error::Format { .. } => "format",
        Error::Kernel(_) | Error::Activation { .. } | Error::NonFiniteGradient { .. } => "numeric",
    }
}

/// One machine-readable failure line.
pub fn error_line(e: &Error) -> String {
    format!("status=error kind={} message={:?}", error_kind(e), e.to_string())
}

pub fn run(cli: Cli) -> Result<String, Error> {
    match cli.command {
        Command::Train { config, out_dir, resume } => cmd_train(&config, &out_dir, resume),
        Command::Eval {
            checkpoint,
            data,
            alpha_one,
            out_dir,
        } => cmd_eval(&checkpoint, data.as_deref(), alpha_one, out_dir.as_deref()),
        Command::Diagnose {
            run_dir,
            out_dir,
            spike_window,
        } => cmd_diagnose(&run_dir, out_dir.as_deref(), spike_window),
        Command::PlotSchedules {
            family,
            warmup,
            layers,
            t_max,
            stride,
            svg,
            out_dir,
        } => cmd_plot_schedules(&family, warmup, layers, t_max, stride, svg.as_deref(), out_dir.as_deref()),
        Command::SweepDepth {
            config,
            depths,
            schedules,
            out_dir,
        } => cmd_sweep_depth(&config, &depths, &schedules, &out_dir),
        Command::SweepSchedule {
            config,
            schedules,
            warmups,
            out_dir,
        } => cmd_sweep_schedule(&config, &schedules, &warmups, &out_dir),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(out) => {
            println!("{out}");
            0
        }
        Err(e) => {
            eprintln!("{}", error_line(&e));
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plot_schedules_linear_example() {
        let out = cmd_plot_schedules("linear", 1000, 12, 12_000, None, None, None).unwrap();
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines.len(), 14);
        assert!(lines[0].starts_with("t,l1,"));
        let last: Vec<&str> = lines[13].split(',').collect();
        assert_eq!(last[0], "12000");
        assert!(last[1..].iter().all(|v| *v == "1.00000"));
    }

    #[test]
    fn error_lines_are_machine_readable() {
        let e = ConfigArgs {
            config: None,
            set: vec!["model.nope=1".into()],
            schedule: None,
            warmup: None,
            seed: None,
        }
        .resolve()
        .unwrap_err();
        let line = error_line(&e);
        assert!(line.starts_with("status=error kind=config message="), "{line}");
        assert!(line.contains("model.nope"));
    }

    #[test]
    fn flags_override_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.cfg");
        fs::write(&p, "schedule.family = equal\nschedule.T = 10\ntrain.seed = 1\n").unwrap();
        let args = ConfigArgs {
            config: Some(p),
            set: vec!["schedule.T=20".into()],
            schedule: Some("linear".into()),
            warmup: None,
            seed: Some(9),
        };
        let c = args.resolve().unwrap();
        assert_eq!(c.model.schedule.family(), ScheduleFamily::Linear);
        assert_eq!(c.model.schedule.warmup(), 20);
        assert_eq!(c.seed, 9);
    }

    #[test]
    fn manifest_round_trip() {
        let m = RunManifest {
            run_id: "1-abc".into(),
            config: TrainConfig::default(),
            corpus_hash: "ff".into(),
            build: build_id(),
            started_unix: 5,
            ended_unix: Some(9),
            status: Some(RunStatus::Diverged),
            final_step: 12,
            eval_loss: Some(2.5),
        };
        assert_eq!(RunManifest::parse(&m.to_text()).unwrap(), m);
    }

    #[test]
    fn subcommands_parse() {
        for args in [
            vec!["prores", "train", "--out-dir", "r", "--set", "model.layers=2", "--schedule", "linear", "--T", "5"],
            vec!["prores", "eval", "--checkpoint", "c.prck"],
            vec!["prores", "diagnose", "--run-dir", "r"],
            vec!["prores", "plot-schedules", "--family", "linear", "--T", "1000", "--L", "12", "--t-max", "12000"],
            vec!["prores", "sweep-depth", "--depths", "2,4", "--schedules", "none,linear:10", "--out-dir", "o"],
            vec!["prores", "sweep-schedule", "--schedules", "linear,equal", "--warmups", "5,10", "--out-dir", "o"],
        ] {
            assert!(Cli::try_parse_from(&args).is_ok(), "{args:?}");
        }
    }
}
