use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn prores(args: &[&str], data_dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_prores"))
        .args(args)
        .env("PRORES_DATA_DIR", data_dir)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const TINY: &str = "model.layers = 2\nmodel.d_model = 16\nmodel.n_heads = 2\nmodel.seq_len = 16\n\
optim.total_steps = 40\noptim.lr_warmup_steps = 4\noptim.peak_lr = 0.003\n\
data.synthetic_bytes = 60000\ndata.batch_size = 4\ndata.eval_batch_size = 16\n\
data.max_eval_samples = 32\ntrain.checkpoint_every = 10\ntrain.probe_every = 10\n";

#[test]
fn plot_schedules_prints_thirteen_rows_ending_at_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = prores(
        &["plot-schedules", "--family", "linear", "--T", "1000", "--L", "12", "--t-max", "12000"],
        dir.path(),
    );
    assert!(o.status.success());
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 13);
    assert!(rows[12].split(',').skip(1).all(|v| v.parse::<f64>().unwrap() == 1.0));
}

#[test]
fn train_eval_diagnose_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.cfg");
    fs::write(&cfg, TINY).unwrap();
    let run = dir.path().join("run");
    let args = [
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--schedule",
        "linear",
        "--T",
        "5",
        "--seed",
        "3",
        "--out-dir",
        run.to_str().unwrap(),
    ];
    let o = prores(&args, dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("status=completed"));
    let manifest = fs::read_to_string(run.join("manifest.txt")).unwrap();
    assert!(manifest.contains("status = completed"));
    assert!(manifest.contains("schedule.family = linear"));
    assert!(manifest.contains("train.seed = 3"));
    // The packed corpus was cached under PRORES_DATA_DIR.
    assert!(fs::read_dir(dir.path()).unwrap().any(|e| e.unwrap().path().extension().is_some_and(|x| x == "prpk")));

    let ck = run.join("checkpoints/step-00000040.prck");
    let o = prores(&["eval", "--checkpoint", ck.to_str().unwrap()], dir.path());
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.starts_with("eval_loss="));
    assert!(text.contains("checkpoint,step,eval_loss,ppl"));

    let o = prores(&["diagnose", "--run-dir", run.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["spike.csv", "norms.csv", "evolution.csv"] {
        assert!(run.join("diagnostics").join(f).exists(), "{f}");
    }
    let norms = fs::read_to_string(run.join("diagnostics/norms.csv")).unwrap();
    assert_eq!(norms.lines().next().unwrap(), "step,l0,l1,l2");
    assert_eq!(norms.lines().count(), 6);

    // A second train into the same directory needs --resume.
    let o = prores(&args, dir.path());
    assert!(!o.status.success());
    let resume = ["train", "--resume", "--out-dir", run.to_str().unwrap()];
    let o = prores(&resume, dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn bad_key_fails_with_a_machine_readable_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let o = prores(&["train", "--set", "model.widht=3", "--out-dir", out.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.starts_with("status=error kind=config"), "{err}");
    assert!(err.contains("model.widht"));
}

#[test]
fn divergence_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.cfg");
    fs::write(&cfg, TINY).unwrap();
    let run = dir.path().join("run");
    let o = prores(
        &[
            "train",
            "--config",
            cfg.to_str().unwrap(),
            "--set",
            "optim.peak_lr=1e30",
            "--set",
            "optim.clip_norm=1e30",
            "--out-dir",
            run.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("status=diverged"));
    assert!(fs::read_to_string(run.join("manifest.txt")).unwrap().contains("status = diverged"));
}

#[test]
fn sweeps_write_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.cfg");
    fs::write(&cfg, TINY.replace("optim.total_steps = 40", "optim.total_steps = 16")).unwrap();
    let out = dir.path().join("sd");
    let o = prores(
        &[
            "sweep-depth",
            "--config",
            cfg.to_str().unwrap(),
            "--depths",
            "1,2",
            "--schedules",
            "none,linear:4",
            "--out-dir",
            out.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(out.join("sweep-depth.csv")).unwrap().lines().count(), 5);
    let out = dir.path().join("ss");
    let o = prores(
        &[
            "sweep-schedule",
            "--config",
            cfg.to_str().unwrap(),
            "--schedules",
            "linear,equal,reverse",
            "--warmups",
            "2",
            "--out-dir",
            out.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("# T=2 ordering linear<=equal<=reverse:"));
}
