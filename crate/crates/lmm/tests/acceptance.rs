//! End-to-end acceptance run on the shipped presets. Prints one PASS/FAIL
//! line per criterion and exits non-zero if any fail.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use lmm::experiments::{collab_dt, find, imrs_ablation, pricing_grid, IMRS_SCENARIOS};
use lmm::config::EnvConfig;
use lmm::ExperimentConfig;
use lmm_core::baselines::{dp_solve, grid_tune, PolicyFamily, PolicySpec, TinyMdpSpec};
use lmm_core::checks;
use lmm_core::inventory::SingleEchelonEnv;
use lmm_core::ppo::train;
use lmm_core::pricing::Scenario;
use lmm_core::sim::evaluate;

/// PPO mean return within this fraction of the DP optimum.
const PPO_DP_GAP: f64 = 0.05;
/// Tuned base-stock level within this many units of the DP level.
const BASE_STOCK_STEPS: f64 = 1.0;
/// Decision transformer mean return at least this fraction of PPO's.
const DT_PPO_RATIO: f64 = 0.9;
/// Hand-computed transition vectors required in the dynamics suite.
const MIN_DYNAMICS_VECTORS: usize = 20;
/// DP truncation for the inventory instance.
const DP_CAP: usize = 20;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn preset(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(&root().join("presets").join(name)).expect("preset loads")
}

fn inventory_oracle() -> Outcome {
    let cfg = preset("inventory-oracle.toml");
    let EnvConfig::Inventory(inv) = &cfg.env else { panic!("inventory preset") };
    let sol = dp_solve(&TinyMdpSpec::from_single_echelon(inv, DP_CAP).unwrap()).unwrap();
    let mut env = SingleEchelonEnv::new(inv.clone()).unwrap();
    let mut agent = train(&mut env, &cfg.ppo, cfg.experiment.train_steps).map_err(|e| e.error).unwrap().agent;
    let seeds = cfg.seeds();
    let ppo = evaluate(&mut env, &mut agent, seeds.len(), seeds[0]).unwrap();
    let cands = PolicySpec::grid(PolicyFamily::BaseStock, &[cfg.tune.levels.clone()]).unwrap();
    let tuned = grid_tune(cands, &mut env, |s| s.single_echelon_policy(inv).unwrap(), cfg.tune.n_eval, cfg.tune.seed).unwrap();
    let level = tuned.best.params()[0];
    let dp_level = sol.base_stock_level(0) as f64;
    let gap = (sol.value - ppo.mean) / sol.value.abs();
    let ok = gap <= PPO_DP_GAP && (level - dp_level).abs() <= BASE_STOCK_STEPS;
    outcome(
        ok,
        format!(
            "dp {:.2}, ppo {:.2} +- {:.2} (gap {:.2}%, limit {:.0}%); tuned base stock {level} vs dp {dp_level}",
            sol.value,
            ppo.mean,
            ppo.std_error(),
            100.0 * gap,
            100.0 * PPO_DP_GAP
        ),
    )
}

fn pricing(out: &Path) -> Outcome {
    let cfg = preset("pricing-grid.toml");
    let results = pricing_grid(&cfg, out, 1).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for sc in Scenario::ALL {
        let label = sc.label();
        let ppo = find(&results, label, "ppo").unwrap().stats();
        let best = ["bslp", "myopic", "ssp"]
            .iter()
            .map(|p| (p, find(&results, label, p).unwrap().stats()))
            .max_by(|a, b| a.1.mean.total_cmp(&b.1.mean))
            .unwrap();
        let pooled = (ppo.std_error().powi(2) + best.1.std_error().powi(2)).sqrt();
        let pass = ppo.mean >= best.1.mean - pooled;
        ok &= pass;
        parts.push(format!("{label}: ppo {:.1} vs {} {:.1} (pooled se {:.1}){}", ppo.mean, best.0, best.1.mean, pooled, if pass { "" } else { " short" }));
    }
    outcome(ok, parts.join("; "))
}

fn imrs(out: &Path) -> Outcome {
    let cfg = preset("imrs-ablation.toml");
    let results = imrs_ablation(&cfg, out, 1).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for (sc, _) in IMRS_SCENARIOS {
        let s = |p: &str| find(&results, sc, p).unwrap().stats();
        let joint = s("joint");
        let others: Vec<(&str, f64)> = ["im_only", "rs_only", "naive"].iter().map(|&p| (p, s(p).mean)).collect();
        let naive_std = s("naive").std;
        let beats = others.iter().all(|(_, m)| joint.mean > *m);
        let tighter = joint.std <= naive_std;
        ok &= beats && tighter;
        let list = others.iter().map(|(p, m)| format!("{p} {m:.1}")).collect::<Vec<_>>().join(", ");
        parts.push(format!("{sc}: joint {:.1} (std {:.1}) vs {list} (naive std {naive_std:.1})", joint.mean, joint.std));
    }
    outcome(ok, parts.join("; "))
}

fn collab(out: &Path) -> Outcome {
    let cfg = preset("collab-dt.toml");
    let report = collab_dt(&cfg, out, &out.join("dataset"), true, 1).unwrap();
    let m = |p: &str| find(&report.results, "collab", p).unwrap().stats().mean;
    let ratio = report.ratio();
    outcome(
        ratio >= DT_PPO_RATIO,
        format!(
            "dt {:.1}, ppo {:.1}, heuristic {:.1}; dt/ppo {ratio:.3} (limit {DT_PPO_RATIO}), target {:.1}, {} episodes",
            m("dt"),
            m("ppo"),
            m("heuristic"),
            report.target_return,
            report.dataset_episodes
        ),
    )
}

fn numeric_checks() -> Outcome {
    let all = checks::run_all();
    let dynamic: Vec<String> = checks::dynamics_vectors().into_iter().map(|c| c.name).collect();
    let numeric: Vec<_> = all.iter().filter(|c| !dynamic.contains(&c.name)).collect();
    let failed: Vec<&str> = numeric.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    let details = numeric.iter().map(|c| format!("{}: {}", c.name, c.detail)).collect::<Vec<_>>().join("; ");
    outcome(failed.is_empty(), if failed.is_empty() { details } else { format!("failed {}; {details}", failed.join(", ")) })
}

fn dynamics() -> Outcome {
    let vs = checks::dynamics_vectors();
    let failed: Vec<&str> = vs.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    let src = fs::read_to_string(root().join("crates/core/tests/dynamics.rs")).unwrap();
    let n = src.matches("#[test]").count();
    let detail = format!("{} of {} built-in vectors exact; {n} bit-exact transition tests (at least {MIN_DYNAMICS_VECTORS})", vs.len() - failed.len(), vs.len());
    outcome(failed.is_empty() && n >= MIN_DYNAMICS_VECTORS, if failed.is_empty() { detail } else { format!("failed {}; {detail}", failed.join(", ")) })
}

/// Shrinks a preset to a few seeds and short training.
fn reduced(name: &str) -> String {
    let text = fs::read_to_string(root().join("presets").join(name)).unwrap();
    let mut v: toml::Table = toml::from_str(&text).unwrap();
    let exp = v["experiment"].as_table_mut().unwrap();
    exp.insert("seeds".into(), toml::Value::Array((0..3).map(toml::Value::Integer).collect()));
    exp.insert("train_steps".into(), toml::Value::Integer(4000));
    exp.remove("out");
    let ppo = v.entry("ppo").or_insert(toml::Value::Table(Default::default())).as_table_mut().unwrap();
    ppo.insert("steps_per_batch".into(), toml::Value::Integer(1000));
    ppo.insert("minibatch".into(), toml::Value::Integer(500));
    ppo.insert("eval_interval".into(), toml::Value::Integer(2000));
    ppo.insert("eval_episodes".into(), toml::Value::Integer(2));
    if let Some(t) = v.get_mut("tune").and_then(|t| t.as_table_mut()) {
        t.insert("n_eval".into(), toml::Value::Integer(3));
    }
    if let Some(d) = v.get_mut("dt").and_then(|t| t.as_table_mut()) {
        d.insert("steps".into(), toml::Value::Integer(10));
    }
    if let Some(c) = v.get_mut("collect").and_then(|t| t.as_table_mut()) {
        for k in ["ppo_episodes", "heuristic_episodes", "random_episodes"] {
            c.insert(k.into(), toml::Value::Integer(3));
        }
    }
    toml::to_string(&v).unwrap()
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv") && !p.to_string_lossy().ends_with("_timing.csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

fn reproducibility(tmp: &Path) -> Outcome {
    let runs: [(&str, &[&str]); 4] = [
        ("inventory-oracle.toml", &["train-ppo"]),
        ("pricing-grid.toml", &["pricing-grid"]),
        ("imrs-ablation.toml", &["imrs-ablation"]),
        ("collab-dt.toml", &["collab-dt", "--collect"]),
    ];
    let mut compared = 0;
    let mut diffs = Vec::new();
    for (name, args) in runs {
        let cfg = tmp.join(name);
        fs::write(&cfg, reduced(name)).unwrap();
        let mut outputs = Vec::new();
        for rep in 0..2 {
            let out = tmp.join(format!("{name}-{rep}"));
            let status = Command::new(env!("CARGO_BIN_EXE_lmm"))
                .args(args)
                .args(["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--workers", "1"])
                .output()
                .unwrap();
            assert!(status.status.success(), "{name}: {}", String::from_utf8_lossy(&status.stderr));
            outputs.push(csv_files(&out));
        }
        let names: Vec<&String> = outputs[0].iter().map(|(n, _)| n).collect();
        if outputs[0] != outputs[1] {
            diffs.push(format!("{name} {names:?}"));
        }
        compared += outputs[0].len();
    }
    outcome(diffs.is_empty() && compared > 0, if diffs.is_empty() { format!("{compared} csv files byte-identical across reruns") } else { format!("differ: {}", diffs.join("; ")) })
}

fn main() -> ExitCode {
    let tmp = tempfile::tempdir().unwrap();
    let dir = |s: &str| tmp.path().join(s);
    let criteria: Vec<(&str, Box<dyn FnOnce() -> Outcome>)> = vec![
        ("1 inventory: ppo near dp, tuned base stock near dp", Box::new(inventory_oracle)),
        ("2 pricing: ppo matches the best heuristic", Box::new(|| pricing(&dir("pricing")))),
        ("3 imrs: joint beats ablations, tighter than naive", Box::new(|| imrs(&dir("imrs")))),
        ("4 collab: dt reaches 90% of ppo", Box::new(|| collab(&dir("collab")))),
        ("5 numeric checks", Box::new(numeric_checks)),
        ("6 dynamics vectors", Box::new(dynamics)),
        ("7 reruns are byte-identical", Box::new(|| reproducibility(&dir("rerun")))),
    ];
    fs::create_dir_all(dir("rerun")).unwrap();
    let mut failed = 0;
    for (name, run) in criteria {
        let t0 = Instant::now();
        let o = run();
        if !o.passed {
            failed += 1;
        }
        println!("{} criterion {name} [{:.0}s]: {}", if o.passed { "PASS" } else { "FAIL" }, t0.elapsed().as_secs_f64(), o.detail);
    }
    println!("acceptance: {failed} of 7 criteria failed");
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
