//! Environment contract, episode execution, trajectories and evaluation
//! statistics shared by every environment and trainer.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Flat view of an environment state handed to policies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvObservation {
    pub features: Vec<f64>,
    /// Period index of the decision this observation precedes.
    pub t: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvAction {
    pub components: Vec<f64>,
}

impl EnvAction {
    pub fn new(components: Vec<f64>) -> Self {
        Self { components }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SliceKind {
    /// Real values clamped to `[lo, hi]`.
    Continuous,
    /// Clamped to `[lo, hi]`, then rounded to the nearest integer.
    Integer,
    /// Each listed group (offsets relative to the slice start) must lie on the
    /// probability simplex.
    Simplex { groups: Vec<Vec<usize>> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ActionSlice {
    pub name: &'static str,
    pub kind: SliceKind,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl ActionSlice {
    pub fn uniform(name: &'static str, kind: SliceKind, len: usize, lo: f64, hi: f64) -> Self {
        Self { name, kind, lo: alloc::vec![lo; len], hi: alloc::vec![hi; len] }
    }

    pub fn len(&self) -> usize {
        self.lo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lo.is_empty()
    }
}

/// Named slices making up an action vector.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ActionLayout {
    pub slices: Vec<ActionSlice>,
}

impl ActionLayout {
    pub fn new(slices: Vec<ActionSlice>) -> Self {
        Self { slices }
    }

    pub fn len(&self) -> usize {
        self.slices.iter().map(ActionSlice::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self, name: &str) -> Option<Range<usize>> {
        let mut start = 0;
        for s in &self.slices {
            if s.name == name {
                return Some(start..start + s.len());
            }
            start += s.len();
        }
        None
    }

    pub fn slice(&self, name: &str) -> Option<&ActionSlice> {
        self.slices.iter().find(|s| s.name == name)
    }

    /// Per-component `(lo, hi, kind)` in layout order.
    pub fn bounds(&self) -> Vec<(f64, f64)> {
        self.slices.iter().flat_map(|s| s.lo.iter().copied().zip(s.hi.iter().copied())).collect()
    }

    /// Clamps every component to its bounds and rounds integer slices.
    /// Returns the applied action and the number of components that moved by
    /// clamping (rounding is not counted).
    pub fn clamp(&self, action: &EnvAction) -> Result<(EnvAction, usize)> {
        if action.components.len() != self.len() {
            return Err(Error::ActionShapeMismatch { expected: self.len(), got: action.components.len() });
        }
        let mut out = Vec::with_capacity(self.len());
        let mut clamped = 0;
        let mut offset = 0;
        for s in &self.slices {
            for k in 0..s.len() {
                let raw = action.components[offset + k];
                let raw = if raw.is_finite() { raw } else { s.lo[k] };
                let v = raw.clamp(s.lo[k], s.hi[k]);
                if v != raw {
                    clamped += 1;
                }
                out.push(match s.kind {
                    SliceKind::Integer => v.round(),
                    _ => v,
                });
            }
            offset += s.len();
        }
        Ok((EnvAction::new(out), clamped))
    }
}

/// Names of observation features, in order.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct ObservationLayout {
    pub names: Vec<String>,
}

impl ObservationLayout {
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn push(&mut self, name: impl Into<String>) {
        self.names.push(name.into());
    }
}

/// Diagnostics attached to a step (sales, lost units, cost components, ...).
pub type Info = BTreeMap<String, f64>;

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub obs: EnvObservation,
    pub reward: f64,
    pub done: bool,
    pub info: Info,
}

impl StepResult {
    pub fn info(&self, key: &str) -> f64 {
        self.info.get(key).copied().unwrap_or(f64::NAN)
    }
}

/// A finite-horizon MDP driven by a seed.
pub trait Environment {
    /// Starts a fresh episode. Identical seeds give bit-identical episodes
    /// under identical action sequences.
    fn reset(&mut self, seed: u64) -> EnvObservation;

    fn step(&mut self, action: &EnvAction) -> Result<StepResult>;

    fn horizon(&self) -> usize;

    fn action_layout(&self) -> &ActionLayout;

    fn observation_layout(&self) -> ObservationLayout;

    fn observation_len(&self) -> usize {
        self.observation_layout().len()
    }
}

impl<E: Environment + ?Sized> Environment for alloc::boxed::Box<E> {
    fn reset(&mut self, seed: u64) -> EnvObservation {
        (**self).reset(seed)
    }
    fn step(&mut self, action: &EnvAction) -> Result<StepResult> {
        (**self).step(action)
    }
    fn horizon(&self) -> usize {
        (**self).horizon()
    }
    fn action_layout(&self) -> &ActionLayout {
        (**self).action_layout()
    }
    fn observation_layout(&self) -> ObservationLayout {
        (**self).observation_layout()
    }
    fn observation_len(&self) -> usize {
        (**self).observation_len()
    }
}

pub trait Policy {
    fn act(&mut self, obs: &EnvObservation) -> EnvAction;

    /// Called at the start of each episode with the episode seed.
    fn reset(&mut self, _seed: u64) {}
}

impl<P: Policy + ?Sized> Policy for alloc::boxed::Box<P> {
    fn act(&mut self, obs: &EnvObservation) -> EnvAction {
        (**self).act(obs)
    }
    fn reset(&mut self, seed: u64) {
        (**self).reset(seed)
    }
}

/// Adapts a closure into a [`Policy`].
pub struct FnPolicy<F>(pub F);

impl<F: FnMut(&EnvObservation) -> EnvAction> Policy for FnPolicy<F> {
    fn act(&mut self, obs: &EnvObservation) -> EnvAction {
        (self.0)(obs)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub rtg: f64,
    pub obs: EnvObservation,
    pub act: EnvAction,
    pub reward: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub records: Vec<Record>,
    pub gamma: f64,
    pub seed: u64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn total_return(&self) -> f64 {
        self.records.iter().map(|r| r.reward).sum()
    }

    /// Recomputes every `rtg` as the undiscounted suffix sum of rewards.
    pub fn fill_returns_to_go(&mut self) {
        let rewards: Vec<f64> = self.records.iter().map(|r| r.reward).collect();
        for (rec, g) in self.records.iter_mut().zip(returns_to_go(&rewards)) {
            rec.rtg = g;
        }
    }
}

/// Undiscounted suffix sums: `rtg[t] = reward[t] + rtg[t + 1]`.
pub fn returns_to_go(rewards: &[f64]) -> Vec<f64> {
    let mut out = alloc::vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        acc += rewards[t];
        out[t] = acc;
    }
    out
}

/// Runs one full episode and records the actions as applied by the
/// environment (after clamping and rounding).
pub fn run_episode<E, P>(env: &mut E, policy: &mut P, seed: u64) -> Result<Trajectory>
where
    E: Environment + ?Sized,
    P: Policy + ?Sized,
{
    let mut obs = env.reset(seed);
    policy.reset(seed);
    let mut records = Vec::with_capacity(env.horizon());
    if env.horizon() > 0 {
        loop {
            let action = policy.act(&obs);
            let (applied, _) = env.action_layout().clamp(&action)?;
            let step = env.step(&action)?;
            records.push(Record { rtg: 0.0, obs, act: applied, reward: step.reward });
            obs = step.obs;
            if step.done {
                break;
            }
        }
    }
    let mut traj = Trajectory { records, gamma: 1.0, seed };
    traj.fill_returns_to_go();
    Ok(traj)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalStats {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
    pub ci95: f64,
    pub samples: Vec<f64>,
}

impl EvalStats {
    /// Sample statistics; `std` uses the `n - 1` denominator and is 0 for `n = 1`.
    pub fn from_samples(samples: Vec<f64>) -> Result<Self> {
        let n = samples.len();
        if n == 0 {
            return Err(Error::EmptySamples);
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            let ss: f64 = samples.iter().map(|x| (x - mean) * (x - mean)).sum();
            (ss / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        let ci95 = 1.96 * std / (n as f64).sqrt();
        Ok(Self { mean, std, n, ci95, samples })
    }

    pub fn std_error(&self) -> f64 {
        self.std / (self.n as f64).sqrt()
    }
}

/// Episode returns for seeds `seed0 .. seed0 + n_episodes`.
pub fn evaluate<E, P>(env: &mut E, policy: &mut P, n_episodes: usize, seed0: u64) -> Result<EvalStats>
where
    E: Environment + ?Sized,
    P: Policy + ?Sized,
{
    if n_episodes == 0 {
        return Err(Error::InvalidConfig("n_episodes must be at least 1".into()));
    }
    let mut samples = Vec::with_capacity(n_episodes);
    for k in 0..n_episodes as u64 {
        samples.push(run_episode(env, policy, seed0.wrapping_add(k))?.total_return());
    }
    EvalStats::from_samples(samples)
}

/// Number of grid points used by [`kde`].
pub const KDE_GRID_POINTS: usize = 513;

/// Gaussian kernel density estimate on an even grid spanning
/// `[min - 4h, max + 4h]`.
pub fn kde(samples: &[f64], bandwidth: f64) -> Result<Vec<(f64, f64)>> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    if !(bandwidth > 0.0) || !bandwidth.is_finite() {
        return Err(Error::InvalidConfig("bandwidth must be positive".into()));
    }
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min) - 4.0 * bandwidth;
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 4.0 * bandwidth;
    let n = samples.len() as f64;
    let norm = 1.0 / (n * bandwidth * (2.0 * core::f64::consts::PI).sqrt());
    let step = (hi - lo) / (KDE_GRID_POINTS - 1) as f64;
    Ok((0..KDE_GRID_POINTS)
        .map(|i| {
            let x = lo + step * i as f64;
            let density: f64 = samples
                .iter()
                .map(|s| {
                    let z = (x - s) / bandwidth;
                    (-0.5 * z * z).exp()
                })
                .sum::<f64>()
                * norm;
            (x, density)
        })
        .collect())
}

/// Silverman's rule of thumb, floored so constant samples still get a kernel.
pub fn silverman_bandwidth(samples: &[f64]) -> f64 {
    let stats = match EvalStats::from_samples(samples.to_vec()) {
        Ok(s) => s,
        Err(_) => return 1.0,
    };
    let h = 1.06 * stats.std * (stats.n as f64).powf(-0.2);
    let floor = 1e-3 * stats.mean.abs().max(1.0);
    h.max(floor)
}

pub fn trapezoid(points: &[(f64, f64)]) -> f64 {
    points.windows(2).map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    /// Deterministic env: reward equals the action, horizon configurable.
    struct Echo {
        t: usize,
        horizon: usize,
        layout: ActionLayout,
    }

    impl Echo {
        fn new(horizon: usize) -> Self {
            let layout = ActionLayout::new(vec![ActionSlice::uniform("x", SliceKind::Continuous, 1, -10.0, 10.0)]);
            Self { t: 0, horizon, layout }
        }
    }

    impl Environment for Echo {
        fn reset(&mut self, _seed: u64) -> EnvObservation {
            self.t = 0;
            EnvObservation { features: vec![0.0], t: 0 }
        }
        fn step(&mut self, action: &EnvAction) -> Result<StepResult> {
            if self.t >= self.horizon {
                return Err(Error::EpisodeFinished);
            }
            let (a, _) = self.layout.clamp(action)?;
            self.t += 1;
            Ok(StepResult {
                obs: EnvObservation { features: vec![self.t as f64], t: self.t },
                reward: a.components[0],
                done: self.t == self.horizon,
                info: Info::new(),
            })
        }
        fn horizon(&self) -> usize {
            self.horizon
        }
        fn action_layout(&self) -> &ActionLayout {
            &self.layout
        }
        fn observation_layout(&self) -> ObservationLayout {
            ObservationLayout { names: vec!["t".into()] }
        }
    }

    #[test]
    fn rtg_of_constant_rewards() {
        let mut env = Echo::new(5);
        let mut pol = FnPolicy(|_: &EnvObservation| EnvAction::new(vec![1.0]));
        let traj = run_episode(&mut env, &mut pol, 0).unwrap();
        let rtg: Vec<f64> = traj.records.iter().map(|r| r.rtg).collect();
        assert_eq!(rtg, vec![5.0, 4.0, 3.0, 2.0, 1.0]);
    }

    #[test]
    fn rtg_suffix_sums() {
        assert_eq!(returns_to_go(&[1.0, 2.0, 3.0]), vec![6.0, 5.0, 3.0]);
    }

    #[test]
    fn empty_horizon_gives_empty_trajectory() {
        let mut env = Echo::new(0);
        let mut pol = FnPolicy(|_: &EnvObservation| EnvAction::new(vec![1.0]));
        assert!(run_episode(&mut env, &mut pol, 0).unwrap().is_empty());
    }

    #[test]
    fn evaluate_constant_return() {
        let mut env = Echo::new(5);
        let mut pol = FnPolicy(|_: &EnvObservation| EnvAction::new(vec![1.0]));
        let stats = evaluate(&mut env, &mut pol, 10, 3).unwrap();
        assert_eq!(stats.mean, 5.0);
        assert_eq!(stats.std, 0.0);
        let one = evaluate(&mut env, &mut pol, 1, 3).unwrap();
        assert_eq!((one.std, one.ci95, one.n), (0.0, 0.0, 1));
    }

    #[test]
    fn step_after_done_fails() {
        let mut env = Echo::new(1);
        env.reset(0);
        env.step(&EnvAction::new(vec![0.0])).unwrap();
        assert_eq!(env.step(&EnvAction::new(vec![0.0])), Err(Error::EpisodeFinished));
    }

    #[test]
    fn clamp_reports_shape_mismatch() {
        let layout = ActionLayout::new(vec![ActionSlice::uniform("q", SliceKind::Integer, 2, 0.0, 5.0)]);
        assert_eq!(
            layout.clamp(&EnvAction::new(vec![1.0])),
            Err(Error::ActionShapeMismatch { expected: 2, got: 1 })
        );
        let (a, n) = layout.clamp(&EnvAction::new(vec![2.6, 9.0])).unwrap();
        assert_eq!(a.components, vec![3.0, 5.0]);
        assert_eq!(n, 1);
    }

    #[test]
    fn kde_single_sample_peak() {
        let pts = kde(&[0.0], 1.0).unwrap();
        let mid = pts[KDE_GRID_POINTS / 2];
        assert_eq!(mid.0, 0.0);
        assert!((mid.1 - 1.0 / (2.0 * core::f64::consts::PI).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn kde_symmetric_pair() {
        let pts = kde(&[-1.0, 1.0], 0.5).unwrap();
        for i in 0..KDE_GRID_POINTS {
            let j = KDE_GRID_POINTS - 1 - i;
            assert!((pts[i].0 + pts[j].0).abs() < 1e-12);
            assert!((pts[i].1 - pts[j].1).abs() < 1e-12);
        }
    }

    #[test]
    fn kde_rejects_empty() {
        assert_eq!(kde(&[], 1.0), Err(Error::EmptySamples));
    }
}
