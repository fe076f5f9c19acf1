//! Clipped-surrogate policy optimization with generalized advantage estimates.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Tensor};
use crate::error::{invalid, Error, Result};
use crate::nn::{clip_grad_norm, ActionAdapter, Adam, NetShape, PolicyParams, RunningNorm};
use crate::rng::{self, stream, StreamRng};
use crate::sim::{evaluate, EnvAction, EnvObservation, Environment, Policy};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub clip: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub lr: f64,
    /// Linearly anneal the learning rate to zero over training.
    pub lr_decay: bool,
    pub epochs: usize,
    pub minibatch: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
    pub seed: u64,
    pub steps_per_batch: usize,
    pub hidden: Vec<usize>,
    pub shared_trunk: bool,
    pub init_log_std: f64,
    /// Rewards are multiplied by this before advantage estimation.
    pub reward_scale: f64,
    /// Append `t / horizon` to the observation.
    pub time_feature: bool,
    /// Integer slices with at most this many values use a categorical head.
    pub categorical_max: usize,
    pub eval_interval: usize,
    pub eval_episodes: usize,
    /// First seed of the evaluation episodes used for the learning curve.
    pub eval_seed: u64,
    /// Return the curve snapshot with the best mean instead of the final params.
    pub keep_best: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip: 0.2,
            gamma: 1.0,
            lambda: 0.95,
            lr: 3e-3,
            lr_decay: true,
            epochs: 4,
            minibatch: 256,
            entropy_coef: 0.0,
            value_coef: 0.5,
            max_grad_norm: 0.5,
            seed: 0,
            steps_per_batch: 1000,
            hidden: vec![32, 32],
            shared_trunk: false,
            init_log_std: -0.5,
            reward_scale: 0.05,
            time_feature: true,
            categorical_max: 0,
            eval_interval: 10_000,
            eval_episodes: 20,
            eval_seed: 1_000_000,
            keep_best: true,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return Err(invalid("clip must lie in (0, 1)"));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(invalid("gamma must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(invalid("lambda must lie in [0, 1]"));
        }
        if !(self.lr >= 0.0) || self.epochs == 0 || self.minibatch == 0 || self.steps_per_batch == 0 {
            return Err(invalid("lr must be non-negative; epochs, minibatch and steps_per_batch positive"));
        }
        if self.eval_interval == 0 || self.eval_episodes == 0 {
            return Err(invalid("eval_interval and eval_episodes must be positive"));
        }
        Ok(())
    }
}

/// Advantages and returns. `dones[t]` marks the last step of an episode, after
/// which the bootstrap value is 0.
pub fn gae(rewards: &[f64], values: &[f64], dones: &[bool], gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    assert!(values.len() == n && dones.len() == n, "gae inputs must be aligned");
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    let mut next_value = 0.0;
    for t in (0..n).rev() {
        if dones[t] {
            next_adv = 0.0;
            next_value = 0.0;
        }
        let delta = rewards[t] + gamma * next_value - values[t];
        next_adv = delta + gamma * lambda * next_adv;
        adv[t] = next_adv;
        next_value = values[t];
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// Mean 0, std 1 (std guarded below by 1e-8).
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.is_empty() {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let std = (adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n).sqrt().max(1e-8);
    adv.iter_mut().for_each(|a| *a = (*a - mean) / std);
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RolloutBatch {
    /// Network inputs (already normalized).
    pub observations: Vec<Vec<f64>>,
    /// Raw head samples.
    pub actions: Vec<Vec<f64>>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub dones: Vec<bool>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBatch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    /// Fills advantages (normalized) and returns.
    pub fn finish(&mut self, gamma: f64, lambda: f64) {
        let (mut adv, ret) = gae(&self.rewards, &self.values, &self.dones, gamma, lambda);
        normalize_advantages(&mut adv);
        self.advantages = adv;
        self.returns = ret;
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub grad_norm: f64,
}

/// Turns environment observations into network inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObsPipeline {
    pub norm: RunningNorm,
    pub time_feature: bool,
    pub horizon: usize,
}

impl ObsPipeline {
    pub fn input_len(&self) -> usize {
        self.norm.mean.len() + usize::from(self.time_feature)
    }

    pub fn encode(&self, obs: &EnvObservation) -> Vec<f64> {
        let mut x = self.norm.normalize(&obs.features);
        if self.time_feature {
            x.push(obs.t as f64 / self.horizon.max(1) as f64);
        }
        x
    }
}

/// Losses and gradient of one minibatch.
fn minibatch_grad(
    params: &PolicyParams,
    adapter: &ActionAdapter,
    batch: &RolloutBatch,
    idx: &[usize],
    cfg: &PpoConfig,
) -> (Vec<f64>, UpdateStats, f64) {
    let b = idx.len();
    let dim = params.shape.obs_dim;
    let mut g = Graph::new();
    let layout = params.shape.layout();
    let blocks = layout.bind(&mut g, &params.flat);
    let mut xs = Vec::with_capacity(b * dim);
    for &i in idx {
        xs.extend_from_slice(&batch.observations[i]);
    }
    let x = g.constant(Tensor::from_vec(b, dim, xs));
    let (pi, v, ls) = params.forward_graph(&mut g, &blocks, x);
    let raw: Vec<Vec<f64>> = idx.iter().map(|&i| batch.actions[i].clone()).collect();
    let (lp, ent) = adapter.log_prob_graph(&mut g, pi, ls, &raw);
    let old = g.constant(Tensor::from_vec(b, 1, idx.iter().map(|&i| batch.log_probs[i]).collect()));
    let adv = g.constant(Tensor::from_vec(b, 1, idx.iter().map(|&i| batch.advantages[i]).collect()));
    let ret = g.constant(Tensor::from_vec(b, 1, idx.iter().map(|&i| batch.returns[i]).collect()));
    let log_ratio = g.sub(lp, old);
    let ratio = g.exp(log_ratio);
    let s1 = g.mul(ratio, adv);
    let clipped = g.clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip);
    let s2 = g.mul(clipped, adv);
    let surr = g.min(s1, s2);
    let mean_surr = g.mean(surr);
    let policy_loss = g.scale(mean_surr, -1.0);
    let err = g.sub(v, ret);
    let sq = g.square(err);
    let value_loss = g.mean(sq);
    let entropy = g.mean(ent);
    let vterm = g.scale(value_loss, cfg.value_coef);
    let eterm = g.scale(entropy, -cfg.entropy_coef);
    let partial = g.add(policy_loss, vterm);
    let loss = g.add(partial, eterm);

    let ratios = &g.value(ratio).data;
    let lrs = &g.value(log_ratio).data;
    let clip_fraction = ratios.iter().filter(|r| (**r - 1.0).abs() > cfg.clip).count() as f64 / b as f64;
    let approx_kl = -lrs.iter().sum::<f64>() / b as f64;
    let stats = UpdateStats {
        policy_loss: g.value(policy_loss).data[0],
        value_loss: g.value(value_loss).data[0],
        entropy: g.value(entropy).data[0],
        approx_kl,
        clip_fraction,
        grad_norm: 0.0,
    };
    let loss_value = g.value(loss).data[0];
    let grads = g.backward(loss);
    (layout.collect(&grads, &blocks), stats, loss_value)
}

/// Several epochs of minibatch updates on one batch. On a non-finite loss or
/// gradient, `params` and `adam` are left exactly as they were.
pub fn ppo_update(
    params: &mut PolicyParams,
    adam: &mut Adam,
    adapter: &ActionAdapter,
    batch: &RolloutBatch,
    cfg: &PpoConfig,
    rng: &mut StreamRng,
) -> Result<UpdateStats> {
    if batch.advantages.len() != batch.len() || batch.returns.len() != batch.len() {
        return Err(invalid("batch advantages must be populated before updating"));
    }
    let saved = (params.flat.clone(), adam.clone());
    let mut order: Vec<usize> = (0..batch.len()).collect();
    let mut total = UpdateStats::default();
    let mut count = 0.0;
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.minibatch) {
            let (mut grad, mut stats, loss) = minibatch_grad(params, adapter, batch, chunk, cfg);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                params.flat = saved.0;
                *adam = saved.1;
                return Err(Error::NonFiniteLoss);
            }
            stats.grad_norm = clip_grad_norm(&mut grad, cfg.max_grad_norm);
            adam.step(&mut params.flat, &grad);
            let n = params.flat.len();
            for s in &mut params.flat[n - params.shape.n_log_std..] {
                *s = s.clamp(-5.0, 2.0);
            }
            total.policy_loss += stats.policy_loss;
            total.value_loss += stats.value_loss;
            total.entropy += stats.entropy;
            total.approx_kl += stats.approx_kl;
            total.clip_fraction += stats.clip_fraction;
            total.grad_norm += stats.grad_norm;
            count += 1.0;
        }
    }
    total.policy_loss /= count;
    total.value_loss /= count;
    total.entropy /= count;
    total.approx_kl /= count;
    total.clip_fraction /= count;
    total.grad_norm /= count;
    Ok(total)
}

/// A trained (or training) policy.
#[derive(Clone, Debug, PartialEq)]
pub struct PpoAgent {
    pub params: PolicyParams,
    pub pipeline: ObsPipeline,
    pub adapter: ActionAdapter,
    /// Act with the distribution mode instead of sampling.
    pub deterministic: bool,
    rng: StreamRng,
}

impl PpoAgent {
    pub fn new(params: PolicyParams, pipeline: ObsPipeline, adapter: ActionAdapter, deterministic: bool) -> Self {
        Self { params, pipeline, adapter, deterministic, rng: rng::substream(0, stream::POLICY) }
    }

    /// Fresh network sized for `env`.
    pub fn for_env<E: Environment + ?Sized>(env: &E, cfg: &PpoConfig) -> Self {
        let adapter = ActionAdapter::new(env.action_layout(), cfg.categorical_max);
        let pipeline = ObsPipeline {
            norm: RunningNorm::new(env.observation_len()),
            time_feature: cfg.time_feature,
            horizon: env.horizon(),
        };
        let shape = NetShape {
            obs_dim: pipeline.input_len(),
            hidden: cfg.hidden.clone(),
            policy_out: adapter.output_len(),
            n_log_std: adapter.n_gaussian,
            shared_trunk: cfg.shared_trunk,
        };
        let params = PolicyParams::new(shape, cfg.init_log_std, cfg.seed);
        Self::new(params, pipeline, adapter, false)
    }

    /// Raw sample, its log-probability and the value estimate.
    pub fn sample(&mut self, x: &[f64]) -> (Vec<f64>, f64, f64) {
        let f = self.params.forward(x).expect("pipeline matches network input");
        let ls = self.params.log_std();
        let raw = if self.deterministic { self.adapter.mode(&f.policy) } else { self.adapter.sample(&f.policy, ls, &mut self.rng) };
        let lp = self.adapter.log_prob(&f.policy, ls, &raw);
        (raw, lp, f.value)
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.rng = rng::substream(seed, stream::POLICY);
    }
}

impl Policy for PpoAgent {
    fn act(&mut self, obs: &EnvObservation) -> EnvAction {
        let x = self.pipeline.encode(obs);
        let (raw, _, _) = self.sample(&x);
        self.adapter.to_env(&raw)
    }

    fn reset(&mut self, seed: u64) {
        if !self.deterministic {
            self.set_seed(seed);
        }
    }
}

/// Collects whole episodes until at least `steps` transitions are stored.
/// Observation statistics are updated from the collected raw observations.
pub fn collect_rollouts<E: Environment + ?Sized>(
    env: &mut E,
    agent: &mut PpoAgent,
    steps: usize,
    episode_seed: &mut u64,
    cfg: &PpoConfig,
) -> Result<(RolloutBatch, Vec<f64>)> {
    let mut batch = RolloutBatch::default();
    let mut raw_obs = Vec::new();
    let mut episode_returns = Vec::new();
    while batch.len() < steps {
        let seed = rng::mix_seed(cfg.seed, *episode_seed);
        *episode_seed += 1;
        let mut obs = env.reset(seed);
        let mut ret = 0.0;
        loop {
            let x = agent.pipeline.encode(&obs);
            let (raw, lp, v) = agent.sample(&x);
            let step = env.step(&agent.adapter.to_env(&raw))?;
            raw_obs.push(obs.features.clone());
            batch.observations.push(x);
            batch.actions.push(raw);
            batch.log_probs.push(lp);
            batch.values.push(v);
            batch.rewards.push(step.reward * cfg.reward_scale);
            batch.dones.push(step.done);
            ret += step.reward;
            obs = step.obs;
            if step.done {
                break;
            }
        }
        episode_returns.push(ret);
    }
    agent.pipeline.norm.update(&raw_obs);
    batch.finish(cfg.gamma, cfg.lambda);
    Ok((batch, episode_returns))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub steps: usize,
    pub mean_return: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub agent: PpoAgent,
    pub curve: Vec<CurvePoint>,
    pub updates: Vec<UpdateStats>,
    pub steps: usize,
}

/// Failed training run with the last parameters that produced finite losses.
#[derive(Debug)]
pub struct TrainAbort {
    pub error: Error,
    pub last_good: PpoAgent,
    pub steps: usize,
}

fn frozen(agent: &PpoAgent) -> PpoAgent {
    let mut a = agent.clone();
    a.deterministic = true;
    a
}

/// Trains a fresh agent for `total_steps` environment steps. Evaluation
/// snapshots are taken every `eval_interval` steps, so the curve has
/// `total_steps / eval_interval` points.
pub fn train<E: Environment + ?Sized>(
    env: &mut E,
    cfg: &PpoConfig,
    total_steps: usize,
) -> core::result::Result<TrainOutput, TrainAbort> {
    let agent = PpoAgent::for_env(env, cfg);
    train_from(env, agent, cfg, total_steps)
}

pub fn train_from<E: Environment + ?Sized>(
    env: &mut E,
    mut agent: PpoAgent,
    cfg: &PpoConfig,
    total_steps: usize,
) -> core::result::Result<TrainOutput, TrainAbort> {
    let abort = |error: Error, agent: &PpoAgent, steps: usize| TrainAbort { error, last_good: frozen(agent), steps };
    if let Err(e) = cfg.validate() {
        return Err(abort(e, &agent, 0));
    }
    if total_steps < cfg.steps_per_batch {
        return Err(abort(invalid("total steps must cover at least one batch"), &agent, 0));
    }
    agent.deterministic = false;
    agent.set_seed(cfg.seed);
    let mut adam = Adam::new(agent.params.flat.len(), cfg.lr);
    let mut shuffle_rng = rng::substream(cfg.seed, stream::SHUFFLE);
    let mut episode_seed = 0u64;
    let mut steps = 0usize;
    let mut curve = Vec::new();
    let mut updates = Vec::new();
    let mut best: Option<(f64, PpoAgent)> = None;
    let mut next_eval = cfg.eval_interval;
    while steps < total_steps {
        let (batch, _) = match collect_rollouts(env, &mut agent, cfg.steps_per_batch, &mut episode_seed, cfg) {
            Ok(b) => b,
            Err(e) => return Err(abort(e, &agent, steps)),
        };
        if cfg.lr_decay {
            adam.lr = cfg.lr * (1.0 - steps as f64 / total_steps as f64).max(0.0);
        }
        match ppo_update(&mut agent.params, &mut adam, &agent.adapter, &batch, cfg, &mut shuffle_rng) {
            Ok(s) => updates.push(s),
            Err(e) => return Err(abort(e, &agent, steps)),
        }
        steps += batch.len();
        while next_eval <= steps && next_eval <= total_steps {
            let mut snapshot = frozen(&agent);
            let stats = match evaluate(env, &mut snapshot, cfg.eval_episodes, cfg.eval_seed) {
                Ok(s) => s,
                Err(e) => return Err(abort(e, &agent, steps)),
            };
            curve.push(CurvePoint { steps: next_eval, mean_return: stats.mean });
            if cfg.keep_best && best.as_ref().is_none_or(|(m, _)| stats.mean > *m) {
                best = Some((stats.mean, snapshot));
            }
            next_eval += cfg.eval_interval;
        }
    }
    let agent = match best {
        Some((best_mean, b)) => {
            let mut last = frozen(&agent);
            let last_mean = match evaluate(env, &mut last, cfg.eval_episodes, cfg.eval_seed) {
                Ok(s) => s.mean,
                Err(e) => return Err(abort(e, &agent, steps)),
            };
            if last_mean >= best_mean {
                last
            } else {
                b
            }
        }
        None => frozen(&agent),
    };
    Ok(TrainOutput { agent, curve, updates, steps })
}
