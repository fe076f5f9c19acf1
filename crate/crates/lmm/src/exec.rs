//! Shared plumbing for experiments: parallel cells, per-seed evaluation,
//! policy construction and output paths.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use lmm_core::baselines::PolicySpec;
use lmm_core::recsys::{RecsysConfig, RecsysEnv};
use lmm_core::rng::{self, stream, StreamRng};
use lmm_core::sim::{run_episode, ActionLayout, EnvAction, EnvObservation, Environment, Policy, SliceKind, Trajectory};
use lmm_core::wrappers::{RandomFill, RandomizedSlices};

use crate::config::{EnvConfig, ExperimentConfig};
use crate::error::{CliError, CliResult};

/// Runs `f(0..n)` on up to `workers` threads and returns results in index
/// order. The first failing index wins.
pub fn run_cells<T, F>(n: usize, workers: usize, f: F) -> CliResult<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> CliResult<T> + Sync,
{
    let workers = workers.clamp(1, n.max(1));
    if workers == 1 {
        return (0..n).map(&f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<CliResult<T>>>> = Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let r = f(i);
                slots.lock().expect("no poisoned cells")[i] = Some(r);
            });
        }
    });
    slots.into_inner().expect("no poisoned cells").into_iter().map(|r| r.expect("every cell ran")).collect()
}

/// A value and the wall-clock seconds it took.
pub struct Timed<T> {
    pub value: T,
    pub seconds: f64,
}

pub fn timed<T>(f: impl FnOnce() -> CliResult<T>) -> CliResult<Timed<T>> {
    let t0 = Instant::now();
    let value = f()?;
    Ok(Timed { value, seconds: t0.elapsed().as_secs_f64() })
}

pub fn episodes<E, P>(env: &mut E, policy: &mut P, seeds: &[u64]) -> CliResult<Vec<Trajectory>>
where
    E: Environment + ?Sized,
    P: Policy + ?Sized,
{
    seeds.iter().map(|&s| run_episode(env, policy, s).map_err(CliError::from)).collect()
}

pub fn returns<E, P>(env: &mut E, policy: &mut P, seeds: &[u64]) -> CliResult<Vec<f64>>
where
    E: Environment + ?Sized,
    P: Policy + ?Sized,
{
    Ok(episodes(env, policy, seeds)?.iter().map(Trajectory::total_return).collect())
}

/// Acts uniformly at random within the action bounds; integer slices get
/// uniform integers and simplex groups a softmax of normal logits.
pub struct UniformPolicy {
    layout: ActionLayout,
    rng: StreamRng,
}

impl UniformPolicy {
    pub fn new(layout: ActionLayout) -> Self {
        Self { layout, rng: rng::substream(0, stream::SAMPLING) }
    }
}

impl Policy for UniformPolicy {
    fn act(&mut self, _obs: &EnvObservation) -> EnvAction {
        let mut out = Vec::with_capacity(self.layout.len());
        for s in &self.layout.slices {
            let fill = match s.kind {
                SliceKind::Simplex { .. } => RandomFill::GaussianSoftmax,
                _ => RandomFill::Uniform,
            };
            out.extend(lmm_core::wrappers::random_slice(s, fill, &mut self.rng));
        }
        EnvAction::new(out)
    }

    fn reset(&mut self, seed: u64) {
        self.rng = rng::substream(seed, stream::SAMPLING);
    }
}

/// Which recommender-inventory decisions are learned.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, clap::ValueEnum, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Override {
    /// Learn everything.
    None,
    /// Learn orders; recommendations are random.
    ImOnly,
    /// Learn recommendations; orders are random.
    RsOnly,
    /// Orders from an IM-only agent, recommendations from an RS-only agent.
    Naive,
}

impl Override {
    pub fn label(self) -> &'static str {
        match self {
            Override::None => "joint",
            Override::ImOnly => "im_only",
            Override::RsOnly => "rs_only",
            Override::Naive => "naive",
        }
    }
}

/// Environment for one ablation variant. `Naive` acts on the full env.
pub fn recsys_env(cfg: &RecsysConfig, variant: Override) -> CliResult<Box<dyn Environment>> {
    let inner = RecsysEnv::new(cfg.clone())?;
    Ok(match variant {
        Override::None | Override::Naive => Box::new(inner),
        Override::ImOnly => Box::new(RandomizedSlices::new(inner, vec![("alpha", RandomFill::GaussianSoftmax)])?),
        Override::RsOnly => Box::new(RandomizedSlices::new(inner, vec![("order", RandomFill::Uniform)])?),
    })
}

/// Environment of `cfg`, with recommender slices replaced per `variant`.
pub fn build_env(env: &EnvConfig, variant: Override) -> CliResult<Box<dyn Environment>> {
    match (env, variant) {
        (_, Override::None) => env.build(),
        (EnvConfig::Recsys(c), Override::ImOnly | Override::RsOnly) => recsys_env(c, variant),
        _ => Err(CliError::Config(format!("--override {} needs a recsys environment", variant.label()))),
    }
}

/// Hash stored with checkpoints and datasets: the env section, plus the
/// override when one is active.
pub fn variant_hash(env: &EnvConfig, variant: Override) -> String {
    match variant {
        Override::None => env.hash(),
        v => crate::config::canonical_hash(&(env, v)),
    }
}

/// The configured `[policy]` heuristic for this environment.
pub fn heuristic_policy(cfg: &ExperimentConfig, spec: &PolicySpec) -> CliResult<Box<dyn Policy>> {
    let none = || CliError::Config(format!("policy family {} does not apply to the {} environment", spec.family().name(), cfg.env.kind()));
    match &cfg.env {
        EnvConfig::Inventory(c) => spec.single_echelon_policy(c).ok_or_else(none),
        EnvConfig::Pricing(c) => Ok(Box::new(spec.pricing_policy(c, &cfg.tune.price_grid).ok_or_else(none)?)),
        EnvConfig::Collab(c) => Ok(Box::new(spec.collab_policy(c).ok_or_else(none)?)),
        _ => Err(none()),
    }
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn checkpoint_dir(out: &Path) -> PathBuf {
    out.join("checkpoints")
}
