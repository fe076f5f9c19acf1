//! Single-step subcommands: simulate, tune, train-ppo, collect, train-dt.

use std::path::{Path, PathBuf};

use lmm_core::baselines::{grid_tune, PolicyFamily, PolicySpec};
use lmm_core::dt::{dt_rollout, dt_train, DtModel};
use lmm_core::ppo::{train, PpoAgent};
use lmm_core::sim::{Environment, Policy, Trajectory};

use crate::checkpoint::{dt_checkpoint, dt_from_checkpoint, ppo_checkpoint, ppo_from_checkpoint, Checkpoint, ModelKind};
use crate::config::{EnvConfig, ExperimentConfig};
use crate::error::{CliError, CliResult};
use crate::exec::{build_env, ensure_dir, episodes, heuristic_policy, variant_hash, write_text, Override, UniformPolicy};
use crate::experiments::{collect_dataset, tune_collab};
use crate::render;
use crate::report::{num, Table};
use crate::trajectory::{read_dataset, write_dataset};

pub fn env_hash(cfg: &ExperimentConfig, variant: Override) -> String {
    variant_hash(&cfg.env, variant)
}

pub enum Loaded {
    Ppo(PpoAgent),
    Dt(DtModel),
}

/// Loads a checkpoint and checks it was trained on this environment.
pub fn load_model(path: &Path, env: &dyn Environment, expected_hash: &str) -> CliResult<Loaded> {
    let ck = Checkpoint::load(path)?;
    if ck.header.env_hash != expected_hash {
        return Err(CliError::Config(format!(
            "{} was trained on environment {}, config describes {expected_hash}",
            path.display(),
            ck.header.env_hash
        )));
    }
    Ok(match ck.header.kind {
        ModelKind::Ppo => Loaded::Ppo(ppo_from_checkpoint(&ck, env, path)?),
        ModelKind::Dt => Loaded::Dt(dt_from_checkpoint(&ck, path)?),
    })
}

/// Runs a checkpoint, the `[policy]` heuristic, or a uniform random policy
/// on the evaluation seeds. Writes `simulate.csv` and one trajectory file per
/// seed under `trajectories/`.
pub fn simulate(cfg: &ExperimentConfig, out: &Path, checkpoint: Option<&Path>, variant: Override) -> CliResult<Vec<Trajectory>> {
    if variant == Override::Naive {
        return Err(CliError::Config("simulate runs one policy; use imrs-ablation for the naive composition".into()));
    }
    let mut env = build_env(&cfg.env, variant)?;
    let seeds = cfg.seeds();
    let hash = env_hash(cfg, variant);
    let (name, trajs) = match checkpoint {
        Some(p) => match load_model(p, env.as_ref(), &hash)? {
            Loaded::Ppo(mut agent) => ("ppo", episodes(&mut env, &mut agent, &seeds)?),
            Loaded::Dt(model) => {
                let target = cfg.dt.target_return;
                let t = seeds.iter().map(|&s| Ok(dt_rollout(&mut env, &model, target, s)?)).collect::<CliResult<Vec<_>>>()?;
                ("dt", t)
            }
        },
        None => match &cfg.policy {
            Some(spec) => {
                let mut p = heuristic_policy(cfg, spec)?;
                (spec.family().name(), episodes(&mut env, &mut p, &seeds)?)
            }
            None => {
                let mut p = UniformPolicy::new(env.action_layout().clone());
                ("random", episodes(&mut env, &mut p, &seeds)?)
            }
        },
    };
    ensure_dir(out)?;
    let mut t = Table::new(&["experiment", "scenario", "policy", "seed", "return"]);
    for tr in &trajs {
        t.push(vec![cfg.experiment.name.clone(), cfg.env.kind().into(), name.into(), tr.seed.to_string(), num(tr.total_return())]);
    }
    t.sort_by_columns(&["scenario", "policy", "seed"]);
    t.write(&out.join("simulate.csv"), &cfg.hash())?;
    let items: Vec<(String, Trajectory)> = trajs.iter().map(|tr| (format!("{name}_{:08}", tr.seed), tr.clone())).collect();
    write_dataset(&out.join("trajectories"), &items, &hash)?;
    Ok(trajs)
}

/// Grid-tunes every heuristic family that applies to the environment.
/// Writes all candidates to `tune.csv` and the winner as a `[policy]`
/// fragment in `tuned.toml`.
pub fn tune(cfg: &ExperimentConfig, out: &Path) -> CliResult<Vec<(PolicySpec, f64)>> {
    let t = &cfg.tune;
    let families: Vec<(PolicyFamily, Vec<Vec<f64>>)> = match &cfg.env {
        EnvConfig::Inventory(_) => vec![
            (PolicyFamily::BaseStock, vec![t.levels.clone()]),
            (PolicyFamily::Ss, vec![t.levels.clone(), t.levels.clone()]),
        ],
        EnvConfig::Pricing(_) => vec![
            (PolicyFamily::Bslp, vec![t.levels.clone(), t.list_prices.clone()]),
            (PolicyFamily::Ssp, vec![t.levels.clone(), t.levels.clone()]),
            (PolicyFamily::Myopic, vec![t.levels.clone()]),
        ],
        EnvConfig::Collab(_) => vec![(PolicyFamily::CollabBaseStock, vec![t.covers.clone(), t.collab_prices.clone()])],
        other => return Err(CliError::Config(format!("no tunable heuristic for the {} environment", other.kind()))),
    };
    let mut env = cfg.env.build()?;
    let mut table = Table::new(&["family", "params", "mean_return"]);
    let mut best = Vec::new();
    for (family, grids) in families {
        let cands = PolicySpec::grid(family, &grids)?;
        let r = grid_tune(cands, &mut env, |s| heuristic_policy(cfg, s).expect("family applies"), t.n_eval, t.seed)?;
        for (spec, mean) in &r.table {
            let params = spec.params().iter().map(|p| num(*p)).collect::<Vec<_>>().join(";");
            table.push(vec![family.name().into(), params, num(*mean)]);
        }
        best.push((r.best, r.stats.mean));
    }
    ensure_dir(out)?;
    table.write(&out.join("tune.csv"), &cfg.hash())?;
    let winner = best.iter().max_by(|a, b| a.1.total_cmp(&b.1)).expect("at least one family");
    #[derive(serde::Serialize)]
    struct Fragment<'a> {
        policy: &'a PolicySpec,
    }
    let mut text = format!("# tuned on {} seeds from {}; mean return {}\n", t.n_eval, t.seed, num(winner.1));
    for (spec, mean) in &best {
        text.push_str(&format!("# {}: {} -> {}\n", spec.family().name(), serde_json::to_string(spec).expect("serializes"), num(*mean)));
    }
    text.push_str(&toml::to_string(&Fragment { policy: &winner.0 }).map_err(|e| CliError::Config(e.to_string()))?);
    write_text(&out.join("tuned.toml"), &text)?;
    Ok(best)
}

/// Trains a PPO agent; writes `ppo.ckpt`, `curve.csv` and `curve.svg`.
pub fn train_ppo(cfg: &ExperimentConfig, out: &Path, variant: Override) -> CliResult<PathBuf> {
    if variant == Override::Naive {
        return Err(CliError::Config("the naive variant is composed from im_only and rs_only agents, not trained".into()));
    }
    let mut env = build_env(&cfg.env, variant)?;
    let trained = match train(&mut env, &cfg.ppo, cfg.experiment.train_steps) {
        Ok(t) => t,
        Err(abort) => {
            ensure_dir(out)?;
            let p = out.join("ppo_last_good.ckpt");
            ppo_checkpoint(&abort.last_good, cfg.ppo.categorical_max, &env_hash(cfg, variant), abort.steps).save(&p)?;
            return Err(abort.into());
        }
    };
    ensure_dir(out)?;
    let p = out.join("ppo.ckpt");
    ppo_checkpoint(&trained.agent, cfg.ppo.categorical_max, &env_hash(cfg, variant), trained.steps).save(&p)?;
    let mut curve = Table::new(&["steps", "mean_return"]);
    for c in &trained.curve {
        curve.push(vec![c.steps.to_string(), num(c.mean_return)]);
    }
    curve.write(&out.join("curve.csv"), &cfg.hash())?;
    write_text(&out.join("curve.svg"), &render::curve_line(&curve)?)?;
    Ok(p)
}

/// Builds the offline dataset under `dir`. The PPO part comes from
/// `checkpoint` or a fresh training run; the heuristic part from `[policy]`,
/// or the tuned collaborative heuristic.
pub fn collect(cfg: &ExperimentConfig, dir: &Path, checkpoint: Option<&Path>) -> CliResult<usize> {
    let mut env = cfg.env.build()?;
    let hash = cfg.env.hash();
    let mut agent = match checkpoint {
        Some(p) => match load_model(p, env.as_ref(), &hash)? {
            Loaded::Ppo(a) => a,
            Loaded::Dt(_) => return Err(CliError::Config("collect needs a PPO checkpoint".into())),
        },
        None => train(&mut env, &cfg.ppo, cfg.experiment.train_steps)?.agent,
    };
    let spec = match (&cfg.policy, &cfg.env) {
        (Some(s), _) => Some(s.clone()),
        (None, EnvConfig::Collab(_)) => Some(tune_collab(cfg)?),
        _ => None,
    };
    let mut heuristic: Option<Box<dyn Policy>> = spec.map(|s| heuristic_policy(cfg, &s)).transpose()?;
    let h: Option<&mut dyn Policy> = match heuristic.as_mut() {
        Some(b) => Some(b.as_mut()),
        None => None,
    };
    let items = collect_dataset(&mut env, &mut agent, h, &cfg.collect)?;
    write_dataset(dir, &items, &hash)?;
    Ok(items.len())
}

/// Fits a decision transformer to the dataset in `dir`; writes `dt.ckpt` and
/// `dt_loss.csv`.
pub fn train_dt(cfg: &ExperimentConfig, out: &Path, dir: &Path) -> CliResult<PathBuf> {
    let hash = cfg.env.hash();
    let items = read_dataset(dir)?;
    if let Some((h, _)) = items.iter().find(|(h, _)| h.config_hash != hash) {
        return Err(CliError::BadFile {
            path: dir.to_path_buf(),
            reason: format!("dataset was collected for environment {}, config has {hash}", h.config_hash),
        });
    }
    let data: Vec<Trajectory> = items.into_iter().map(|(_, t)| t).collect();
    let trained = dt_train(&data, &cfg.dt)?;
    ensure_dir(out)?;
    let p = out.join("dt.ckpt");
    dt_checkpoint(&trained.model, &hash, cfg.dt.steps).save(&p)?;
    let mut loss = Table::new(&["step", "loss"]);
    for (k, l) in trained.losses.iter().enumerate() {
        loss.push(vec![k.to_string(), num(*l)]);
    }
    loss.write(&out.join("dt_loss.csv"), &cfg.hash())?;
    Ok(p)
}
