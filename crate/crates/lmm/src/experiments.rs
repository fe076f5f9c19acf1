//! The three comparison experiments: pricing scenarios a-d, the
//! recommendation-inventory ablation and the collaborative transformer run.

use std::path::{Path, PathBuf};

use lmm_core::baselines::{grid_tune, PolicyFamily, PolicySpec};
use lmm_core::collab::CollabEnv;
use lmm_core::dt::{dt_rollout, dt_train};
use lmm_core::inventory::ShortageMode;
use lmm_core::ppo::{train, PpoAgent};
use lmm_core::pricing::{PricingEnv, Scenario};
use lmm_core::sim::{kde, run_episode, silverman_bandwidth, Environment, EvalStats, Policy, Trajectory};
use lmm_core::wrappers::ComposedPolicy;

use crate::checkpoint::{dt_checkpoint, ppo_checkpoint, ppo_from_checkpoint, Checkpoint};
use crate::config::{CollectSection, EnvConfig, ExperimentConfig};
use crate::error::{CliError, CliResult};
use crate::exec::{checkpoint_dir, ensure_dir, episodes, recsys_env, returns, run_cells, timed, variant_hash, write_text, Override, UniformPolicy};
use crate::render;
use crate::report::{num, Table};
use crate::trajectory::{read_dataset, write_dataset};

/// Per-seed returns of one policy in one scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyResult {
    pub scenario: String,
    pub policy: String,
    pub seeds: Vec<u64>,
    pub returns: Vec<f64>,
    /// Tuned parameters or checkpoint name.
    pub params: String,
    pub seconds: f64,
}

impl PolicyResult {
    pub fn stats(&self) -> EvalStats {
        EvalStats::from_samples(self.returns.clone()).expect("at least one seed")
    }
}

pub fn find<'a>(results: &'a [PolicyResult], scenario: &str, policy: &str) -> Option<&'a PolicyResult> {
    results.iter().find(|r| r.scenario == scenario && r.policy == policy)
}

fn spec_label(spec: &PolicySpec) -> String {
    serde_json::to_string(spec).expect("spec serializes")
}

pub fn returns_table(experiment: &str, results: &[PolicyResult]) -> Table {
    let mut t = Table::new(&["experiment", "scenario", "policy", "seed", "return"]);
    for r in results {
        for (s, g) in r.seeds.iter().zip(&r.returns) {
            t.push(vec![experiment.into(), r.scenario.clone(), r.policy.clone(), s.to_string(), num(*g)]);
        }
    }
    t.sort_by_columns(&["scenario", "policy", "seed"]);
    t
}

pub fn summary_table(results: &[PolicyResult]) -> Table {
    let mut t = Table::new(&["scenario", "policy", "n", "mean", "std", "std_error", "params"]);
    for r in results {
        let s = r.stats();
        t.push(vec![
            r.scenario.clone(),
            r.policy.clone(),
            s.n.to_string(),
            num(s.mean),
            num(s.std),
            num(s.std_error()),
            r.params.clone(),
        ]);
    }
    t.sort_by_columns(&["scenario", "policy"]);
    t
}

/// Wall-clock seconds per cell. Not reproducible, so kept apart from the
/// result tables.
pub fn timing_table(results: &[PolicyResult]) -> Table {
    let mut t = Table::new(&["scenario", "policy", "seconds"]);
    for r in results {
        t.push(vec![r.scenario.clone(), r.policy.clone(), format!("{:.3}", r.seconds)]);
    }
    t.sort_by_columns(&["scenario", "policy"]);
    t
}

fn write_tables(out: &Path, cfg: &ExperimentConfig, prefix: &str, returns_name: &str, results: &[PolicyResult]) -> CliResult<Table> {
    let hash = cfg.hash();
    returns_table(&cfg.experiment.name, results).write(&out.join(returns_name), &hash)?;
    let summary = summary_table(results);
    summary.write(&out.join(format!("{prefix}_summary.csv")), &hash)?;
    timing_table(results).write(&out.join(format!("{prefix}_timing.csv")), &hash)?;
    Ok(summary)
}

fn save_ppo(out: &Path, name: &str, agent: &PpoAgent, cfg: &ExperimentConfig, env_hash: &str, steps: usize) -> CliResult<PathBuf> {
    let dir = checkpoint_dir(out);
    ensure_dir(&dir)?;
    let p = dir.join(format!("{name}.ckpt"));
    ppo_checkpoint(agent, cfg.ppo.categorical_max, env_hash, steps).save(&p)?;
    Ok(p)
}

pub const PRICING_POLICIES: [&str; 4] = ["bslp", "myopic", "ppo", "ssp"];

/// Scenarios a-d, each with tuned BSLP, (s,S,p) and myopic heuristics and a
/// trained PPO agent, all evaluated on the configured seeds.
pub fn pricing_grid(cfg: &ExperimentConfig, out: &Path, workers: usize) -> CliResult<Vec<PolicyResult>> {
    let EnvConfig::Pricing(base) = &cfg.env else {
        return Err(CliError::Config("pricing-grid needs an [env.pricing] section".into()));
    };
    ensure_dir(out)?;
    let seeds = cfg.seeds();
    let cells: Vec<(Scenario, &str)> =
        Scenario::ALL.iter().flat_map(|&s| PRICING_POLICIES.iter().map(move |&p| (s, p))).collect();
    let tune = &cfg.tune;
    let results = run_cells(cells.len(), workers, |i| {
        let (sc, policy) = cells[i];
        let ecfg = base.with_scenario(sc, cfg.experiment.fixed_cost);
        let env_hash = EnvConfig::Pricing(ecfg.clone()).hash();
        let t = timed(|| {
            let mut env = PricingEnv::new(ecfg.clone())?;
            if policy == "ppo" {
                let trained = train(&mut env, &cfg.ppo, cfg.experiment.train_steps)?;
                let mut agent = trained.agent;
                let name = format!("pricing_{}_ppo", sc.label());
                save_ppo(out, &name, &agent, cfg, &env_hash, trained.steps)?;
                return Ok((returns(&mut env, &mut agent, &seeds)?, format!("{name}.ckpt")));
            }
            let (family, grids) = match policy {
                "bslp" => (PolicyFamily::Bslp, vec![tune.levels.clone(), tune.list_prices.clone()]),
                "ssp" => (PolicyFamily::Ssp, vec![tune.levels.clone(), tune.levels.clone()]),
                _ => (PolicyFamily::Myopic, vec![tune.levels.clone()]),
            };
            let cands = PolicySpec::grid(family, &grids)?;
            let build = |s: &PolicySpec| s.pricing_policy(&ecfg, &tune.price_grid).expect("pricing family");
            let best = grid_tune(cands, &mut env, build, tune.n_eval, tune.seed)?.best;
            let mut p = build(&best);
            Ok((returns(&mut env, &mut p, &seeds)?, spec_label(&best)))
        })?;
        let (rets, params) = t.value;
        Ok(PolicyResult {
            scenario: sc.label().into(),
            policy: policy.into(),
            seeds: seeds.clone(),
            returns: rets,
            params,
            seconds: t.seconds,
        })
    })?;
    let summary = write_tables(out, cfg, "pricing", "pricing_grid.csv", &results)?;
    write_text(&out.join("pricing_grid.svg"), &render::summary_bars(&summary, "Pricing and replenishment, scenarios a-d")?)?;
    Ok(results)
}

pub const IMRS_SCENARIOS: [(&str, ShortageMode); 2] = [("backlog", ShortageMode::Backlog), ("lost_sales", ShortageMode::LostSales)];

/// Joint, IM-only and RS-only agents per shortage mode, plus the naive
/// composition of the two single-decision agents loaded back from their
/// checkpoints.
pub fn imrs_ablation(cfg: &ExperimentConfig, out: &Path, workers: usize) -> CliResult<Vec<PolicyResult>> {
    let EnvConfig::Recsys(base) = &cfg.env else {
        return Err(CliError::Config("imrs-ablation needs an [env.recsys] section".into()));
    };
    ensure_dir(out)?;
    let seeds = cfg.seeds();
    let variants = [Override::None, Override::ImOnly, Override::RsOnly];
    let cells: Vec<(usize, Override)> = (0..IMRS_SCENARIOS.len()).flat_map(|s| variants.iter().map(move |&v| (s, v))).collect();
    let scenario_cfg = |s: usize| {
        let mut c = base.clone();
        c.mode = IMRS_SCENARIOS[s].1;
        c
    };
    let env_hash = |s: usize, v: Override| variant_hash(&EnvConfig::Recsys(scenario_cfg(s)), v);
    let ckpt_name = |s: usize, v: Override| format!("imrs_{}_{}", IMRS_SCENARIOS[s].0, v.label());
    let mut results = run_cells(cells.len(), workers, |i| {
        let (s, v) = cells[i];
        let t = timed(|| {
            let mut env = recsys_env(&scenario_cfg(s), v)?;
            let trained = train(&mut env, &cfg.ppo, cfg.experiment.train_steps)?;
            let mut agent = trained.agent;
            save_ppo(out, &ckpt_name(s, v), &agent, cfg, &env_hash(s, v), trained.steps)?;
            returns(&mut env, &mut agent, &seeds)
        })?;
        Ok(PolicyResult {
            scenario: IMRS_SCENARIOS[s].0.into(),
            policy: v.label().into(),
            seeds: seeds.clone(),
            returns: t.value,
            params: format!("{}.ckpt", ckpt_name(s, v)),
            seconds: t.seconds,
        })
    })?;
    let naive = run_cells(IMRS_SCENARIOS.len(), workers, |s| {
        let t = timed(|| {
            let load = |v: Override| -> CliResult<PpoAgent> {
                let p = checkpoint_dir(out).join(format!("{}.ckpt", ckpt_name(s, v)));
                let ck = Checkpoint::load(&p)?;
                if ck.header.env_hash != env_hash(s, v) {
                    return Err(CliError::CorruptCheckpoint { path: p, reason: "environment hash mismatch".into() });
                }
                ppo_from_checkpoint(&ck, recsys_env(&scenario_cfg(s), v)?.as_ref(), &p)
            };
            let im = load(Override::ImOnly)?;
            let rs = load(Override::RsOnly)?;
            let mut env = recsys_env(&scenario_cfg(s), Override::Naive)?;
            let parts: Vec<(Box<dyn Policy>, Vec<&'static str>)> = vec![(Box::new(im), vec!["order"]), (Box::new(rs), vec!["alpha"])];
            let mut policy = ComposedPolicy::new(env.action_layout().clone(), parts)?;
            returns(&mut env, &mut policy, &seeds)
        })?;
        Ok(PolicyResult {
            scenario: IMRS_SCENARIOS[s].0.into(),
            policy: Override::Naive.label().into(),
            seeds: seeds.clone(),
            returns: t.value,
            params: format!("{}.ckpt+{}.ckpt", ckpt_name(s, Override::ImOnly), ckpt_name(s, Override::RsOnly)),
            seconds: t.seconds,
        })
    })?;
    results.extend(naive);
    let summary = write_tables(out, cfg, "imrs", "imrs_samples.csv", &results)?;
    let kde_t = kde_table(&results)?;
    kde_t.write(&out.join("imrs_kde.csv"), &cfg.hash())?;
    for (sc, _) in IMRS_SCENARIOS {
        write_text(&out.join(format!("imrs_kde_{sc}.svg")), &render::kde_lines(&kde_t, sc)?)?;
    }
    write_text(&out.join("imrs_summary.svg"), &render::summary_bars(&summary, "Recommendation and inventory ablation")?)?;
    Ok(results)
}

/// Gaussian KDE of each result's returns with Silverman's bandwidth.
pub fn kde_table(results: &[PolicyResult]) -> CliResult<Table> {
    let mut t = Table::new(&["scenario", "policy", "bandwidth", "x", "density"]);
    let mut sorted: Vec<&PolicyResult> = results.iter().collect();
    sorted.sort_by(|a, b| (&a.scenario, &a.policy).cmp(&(&b.scenario, &b.policy)));
    for r in sorted {
        let h = silverman_bandwidth(&r.returns);
        for (x, d) in kde(&r.returns, h)? {
            t.push(vec![r.scenario.clone(), r.policy.clone(), num(h), num(x), num(d)]);
        }
    }
    Ok(t)
}

/// Offline episodes: the PPO agent, the heuristic and a uniform random
/// policy. Seeds are `seed + k`, `seed + 10000 + k` and `seed + 20000 + k`.
pub fn collect_dataset<E: Environment + ?Sized>(
    env: &mut E,
    ppo: &mut PpoAgent,
    heuristic: Option<&mut dyn Policy>,
    c: &CollectSection,
) -> CliResult<Vec<(String, Trajectory)>> {
    let mut out = Vec::new();
    let mut random = UniformPolicy::new(env.action_layout().clone());
    let mut run = |name: &str, policy: &mut dyn Policy, n: usize, offset: u64| -> CliResult<()> {
        for k in 0..n as u64 {
            let seed = c.seed + offset + k;
            out.push((format!("{name}_{seed:08}"), run_episode(env, policy, seed)?));
        }
        Ok(())
    };
    ppo.deterministic = true;
    run("ppo", ppo, c.ppo_episodes, 0)?;
    if let Some(h) = heuristic {
        run("heuristic", h, c.heuristic_episodes, 10_000)?;
    }
    run("random", &mut random, c.random_episodes, 20_000)?;
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct CollabReport {
    pub results: Vec<PolicyResult>,
    pub target_return: f64,
    pub dataset_episodes: usize,
    pub dt_losses: Vec<f64>,
}

impl CollabReport {
    pub fn ratio(&self) -> f64 {
        let m = |p: &str| find(&self.results, "collab", p).expect("policy present").stats().mean;
        m("dt") / m("ppo")
    }
}

/// Best collaborative heuristic on the tuning grid.
pub fn tune_collab(cfg: &ExperimentConfig) -> CliResult<PolicySpec> {
    let EnvConfig::Collab(c) = &cfg.env else {
        return Err(CliError::Config("needs an [env.collab] section".into()));
    };
    let mut env = CollabEnv::new(c.clone())?;
    let cands = PolicySpec::grid(PolicyFamily::CollabBaseStock, &[cfg.tune.covers.clone(), cfg.tune.collab_prices.clone()])?;
    Ok(grid_tune(cands, &mut env, |s| s.collab_policy(c).expect("collab family"), cfg.tune.n_eval, cfg.tune.seed)?.best)
}

/// Trains a decision transformer on an offline dataset and compares it with
/// PPO and the tuned heuristic on the same seeds. With `collect`, the
/// dataset is generated first and written to `dataset`; otherwise it must
/// already exist there.
pub fn collab_dt(cfg: &ExperimentConfig, out: &Path, dataset: &Path, collect: bool, workers: usize) -> CliResult<CollabReport> {
    let EnvConfig::Collab(c) = &cfg.env else {
        return Err(CliError::Config("collab-dt needs an [env.collab] section".into()));
    };
    let env_hash = cfg.env.hash();
    let existing = if collect { None } else { Some(read_dataset(dataset)?) };
    ensure_dir(out)?;
    let seeds = cfg.seeds();

    enum Prep {
        Ppo(PpoAgent, usize, f64),
        Heuristic(PolicySpec, f64),
    }
    let prep = run_cells(2, workers, |i| {
        if i == 0 {
            let t = timed(|| {
                let mut env = CollabEnv::new(c.clone())?;
                Ok(train(&mut env, &cfg.ppo, cfg.experiment.train_steps)?)
            })?;
            Ok(Prep::Ppo(t.value.agent, t.value.steps, t.seconds))
        } else {
            let t = timed(|| tune_collab(cfg))?;
            Ok(Prep::Heuristic(t.value, t.seconds))
        }
    })?;
    let mut it = prep.into_iter();
    let (Some(Prep::Ppo(mut ppo, ppo_steps, ppo_secs)), Some(Prep::Heuristic(spec, heur_secs))) = (it.next(), it.next()) else {
        unreachable!("cells return in order")
    };
    save_ppo(out, "collab_ppo", &ppo, cfg, &env_hash, ppo_steps)?;
    let mut env = CollabEnv::new(c.clone())?;
    let mut heuristic = spec.collab_policy(c).expect("collab family");

    let data: Vec<Trajectory> = match existing {
        Some(items) => {
            if let Some((h, _)) = items.iter().find(|(h, _)| h.config_hash != env_hash) {
                return Err(CliError::BadFile {
                    path: dataset.to_path_buf(),
                    reason: format!("dataset was collected for environment {}, config has {env_hash}", h.config_hash),
                });
            }
            items.into_iter().map(|(_, t)| t).collect()
        }
        None => {
            let items = collect_dataset(&mut env, &mut ppo, Some(&mut heuristic), &cfg.collect)?;
            write_dataset(dataset, &items, &env_hash)?;
            items.into_iter().map(|(_, t)| t).collect()
        }
    };

    let t_dt = timed(|| Ok(dt_train(&data, &cfg.dt)?))?;
    let trained = t_dt.value;
    dt_checkpoint(&trained.model, &env_hash, cfg.dt.steps).save(&checkpoint_dir(out).join("collab_dt.ckpt"))?;
    let mut loss = Table::new(&["step", "loss"]);
    for (k, l) in trained.losses.iter().enumerate() {
        loss.push(vec![k.to_string(), num(*l)]);
    }
    loss.write(&out.join("dt_loss.csv"), &cfg.hash())?;
    let target = if cfg.collect.target_from_dataset {
        data.iter().map(Trajectory::total_return).fold(f64::NEG_INFINITY, f64::max)
    } else {
        cfg.dt.target_return
    };

    let t_eval = timed(|| seeds.iter().map(|&s| Ok(dt_rollout(&mut env, &trained.model, target, s)?)).collect::<CliResult<Vec<_>>>())?;
    let dt_trajs = t_eval.value;
    let ppo_trajs = episodes(&mut env, &mut ppo, &seeds)?;
    let heur_trajs = episodes(&mut env, &mut heuristic, &seeds)?;
    let result = |policy: &str, trajs: &[Trajectory], params: String, seconds: f64| PolicyResult {
        scenario: "collab".into(),
        policy: policy.into(),
        seeds: seeds.clone(),
        returns: trajs.iter().map(Trajectory::total_return).collect(),
        params,
        seconds,
    };
    let results = vec![
        result("dt", &dt_trajs, format!("collab_dt.ckpt target={target}"), t_dt.seconds + t_eval.seconds),
        result("heuristic", &heur_trajs, spec_label(&spec), heur_secs),
        result("ppo", &ppo_trajs, "collab_ppo.ckpt".into(), ppo_secs),
    ];
    let summary = write_tables(out, cfg, "collab", "collab_returns.csv", &results)?;
    let trace = trace_table(c.n_items(), &[("dt", &dt_trajs[0]), ("heuristic", &heur_trajs[0]), ("ppo", &ppo_trajs[0])]);
    trace.write(&out.join("collab_trace.csv"), &cfg.hash())?;
    write_text(&out.join("collab_comparison.svg"), &render::summary_bars(&summary, "Collaborative decisions")?)?;
    write_text(&out.join("collab_orders.svg"), &render::order_lines(&trace)?)?;
    Ok(CollabReport { results, target_return: target, dataset_episodes: data.len(), dt_losses: trained.losses })
}

/// Per-period decisions and on-hand stock of one episode per policy.
pub fn trace_table(n_items: usize, episodes: &[(&str, &Trajectory)]) -> Table {
    let mut t = Table::new(&["policy", "seed", "t", "item", "on_hand", "method", "order", "price", "rec", "reward"]);
    for (policy, traj) in episodes {
        for r in &traj.records {
            let (f, a) = (&r.obs.features, &r.act.components);
            for i in 0..n_items {
                t.push(vec![
                    policy.to_string(),
                    traj.seed.to_string(),
                    r.obs.t.to_string(),
                    i.to_string(),
                    num(f[n_items + i]),
                    num(a[i]),
                    num(a[n_items + i]),
                    num(a[2 * n_items + i]),
                    num(a[3 * n_items + i]),
                    num(r.reward),
                ]);
            }
        }
    }
    t
}
