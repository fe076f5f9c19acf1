use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lmm::report::Table;
use lmm::ExperimentConfig;

const TINY: &str = r#"
[experiment]
name = "tiny"
seeds = [3, 1, 2]
train_steps = 2000

[env.inventory]
horizon = 6
lead_time = 0
holding_cost = 0.5
shortage_cost = 1.0
order_cost = 2.0
price = 5.0
max_order = 8.0
demand = { kind = "poisson", rate = 3.0 }

[ppo]
steps_per_batch = 500
minibatch = 250
eval_interval = 1000
eval_episodes = 4

[tune]
levels = [0.0, 2.0, 4.0, 6.0]
n_eval = 5
"#;

fn lmm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lmm")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("cfg.toml");
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn presets_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../presets");
    let mut n = 0;
    for e in fs::read_dir(&dir).unwrap() {
        let p = e.unwrap().path();
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("# Parameters invented, not the paper's."), "{}", p.display());
        ExperimentConfig::load(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        n += 1;
    }
    assert_eq!(n, 4);
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), &TINY.replace("horizon = 6", "horizon = 6\nhorizn = 7"));
    let o = lmm(&["simulate", "--config", s(&bad), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("horizn"));
    let o = lmm(&["pricing-grid", "--config", s(&write_config(dir.path(), TINY))]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(lmm(&["tune"]).status.code(), Some(2));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn corrupted_checkpoint_fails_validation_by_name() {
    let dir = tempfile::tempdir().unwrap();
    let o = lmm(&["validate", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let ck = dir.path().join("checkpoints");
    fs::create_dir(&ck).unwrap();
    fs::write(ck.join("broken.ckpt"), b"LMMCKPT1\x05\x00\x00\x00{}").unwrap();
    let o = lmm(&["validate", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(3));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.lines().any(|l| l.starts_with("FAIL") && l.contains("broken.ckpt")), "{stdout}");
}

#[test]
fn validate_leaves_config_untouched() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let before = fs::read(&cfg).unwrap();
    let o = lmm(&["validate", "--config", s(&cfg), "--out", s(&dir.path().join("none"))]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(fs::read(&cfg).unwrap(), before);
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn collab_dt_without_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let preset = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../presets/collab-dt.toml");
    let o = lmm(&["collab-dt", "--config", s(&preset), "--out", s(dir.path()), "--dataset", s(&dir.path().join("nope"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no trajectory dataset"));
}

#[test]
fn train_simulate_validate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = dir.path().join("out");
    let o = lmm(&["train-ppo", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["ppo.ckpt", "curve.csv", "curve.svg"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let o = lmm(&["simulate", "--config", s(&cfg), "--out", s(&out), "--checkpoint", s(&out.join("ppo.ckpt"))]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (hash, t) = Table::read(&out.join("simulate.csv")).unwrap();
    assert_eq!(hash, ExperimentConfig::load(&cfg).unwrap().hash());
    let k = t.column("seed").unwrap();
    assert_eq!(t.rows.iter().map(|r| r[k].as_str()).collect::<Vec<_>>(), ["1", "2", "3"]);
    assert_eq!(fs::read_dir(out.join("trajectories")).unwrap().count(), 3);
    assert!(lmm(&["validate", "--out", s(&out)]).status.success());

    // A checkpoint for a different environment is refused.
    let other = write_config(dir.path(), &TINY.replace("rate = 3.0", "rate = 4.0"));
    let o = lmm(&["simulate", "--config", s(&other), "--out", s(&out), "--checkpoint", s(&out.join("ppo.ckpt"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn tune_writes_a_usable_policy() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = dir.path().join("out");
    assert!(lmm(&["tune", "--config", s(&cfg), "--out", s(&out)]).status.success());
    let fragment = fs::read_to_string(out.join("tuned.toml")).unwrap();
    let with_policy = write_config(dir.path(), &format!("{TINY}\n{fragment}"));
    let o = lmm(&["simulate", "--config", s(&with_policy), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (_, t) = Table::read(&out.join("simulate.csv")).unwrap();
    let k = t.column("policy").unwrap();
    assert!(t.rows.iter().all(|r| r[k] != "random"));
}

#[test]
fn collect_then_train_dt() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "{TINY}\n[collect]\nppo_episodes = 3\nheuristic_episodes = 0\nrandom_episodes = 2\n\n[dt]\nsteps = 5\nembed_dim = 8\nheads = 1\nlayers = 1\nmax_timestep = 6\n"
    );
    let cfg = write_config(dir.path(), &text);
    let out = dir.path().join("out");
    let o = lmm(&["collect", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_dir(out.join("dataset")).unwrap().count(), 5);
    let o = lmm(&["train-dt", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = lmm(&["simulate", "--config", s(&cfg), "--out", s(&out), "--checkpoint", s(&out.join("dt.ckpt"))]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(lmm(&["validate", "--out", s(&out)]).status.success());
}

#[test]
fn report_redraws_identical_svg() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = dir.path().join("out");
    assert!(lmm(&["train-ppo", "--config", s(&cfg), "--out", s(&out)]).status.success());
    let svg = fs::read(out.join("curve.svg")).unwrap();
    fs::remove_file(out.join("curve.svg")).unwrap();
    assert!(lmm(&["report", "--out", s(&out)]).status.success());
    assert_eq!(fs::read(out.join("curve.svg")).unwrap(), svg);
}
