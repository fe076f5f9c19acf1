use lmm_core::nn::Adam;
use lmm_core::dt::*;
use lmm_core::error::Result;
use lmm_core::inventory::{SingleEchelonConfig, SingleEchelonEnv};
use lmm_core::ppo::*;
use lmm_core::rng::{self, stream};
use lmm_core::sim::*;

/// One-step bandit: action 0 pays 1, action 1 pays 0.
struct Bandit {
    layout: ActionLayout,
}

impl Bandit {
    fn new() -> Self {
        Self { layout: ActionLayout::new(vec![ActionSlice::uniform("arm", SliceKind::Integer, 1, 0.0, 1.0)]) }
    }
}

impl Environment for Bandit {
    fn reset(&mut self, _seed: u64) -> EnvObservation {
        EnvObservation { features: vec![1.0], t: 0 }
    }
    fn step(&mut self, action: &EnvAction) -> Result<StepResult> {
        let reward = if action.components[0] < 0.5 { 1.0 } else { 0.0 };
        Ok(StepResult { obs: EnvObservation { features: vec![1.0], t: 1 }, reward, done: true, info: Info::new() })
    }
    fn horizon(&self) -> usize {
        1
    }
    fn action_layout(&self) -> &ActionLayout {
        &self.layout
    }
    fn observation_layout(&self) -> ObservationLayout {
        ObservationLayout { names: vec!["one".into()] }
    }
}

fn p_arm0(agent: &PpoAgent) -> f64 {
    let x = agent.pipeline.encode(&EnvObservation { features: vec![1.0], t: 0 });
    let f = agent.params.forward(&x).unwrap();
    agent.adapter.log_prob(&f.policy, agent.params.log_std(), &[0.0]).exp()
}

#[test]
fn bandit_learns_the_paying_arm() {
    let mut env = Bandit::new();
    let cfg = PpoConfig { categorical_max: 2, steps_per_batch: 32, minibatch: 32, reward_scale: 1.0, lr: 1e-2, ..PpoConfig::default() };
    let mut agent = PpoAgent::for_env(&env, &cfg);
    assert!((p_arm0(&agent) - 0.5).abs() < 0.2);
    let mut adam = Adam::new(agent.params.flat.len(), cfg.lr);
    let mut shuffle = rng::substream(0, stream::SHUFFLE);
    let mut episode = 0;
    let mut reached = None;
    for it in 0..500 {
        let (batch, _) = collect_rollouts(&mut env, &mut agent, cfg.steps_per_batch, &mut episode, &cfg).unwrap();
        ppo_update(&mut agent.params, &mut adam, &agent.adapter, &batch, &cfg, &mut shuffle).unwrap();
        if p_arm0(&agent) > 0.95 {
            reached = Some(it);
            break;
        }
    }
    assert!(reached.is_some(), "p(arm 0) = {}", p_arm0(&agent));
}

fn small_inventory() -> SingleEchelonEnv {
    SingleEchelonEnv::new(SingleEchelonConfig { horizon: 6, ..SingleEchelonConfig::default() }).unwrap()
}

#[test]
fn zero_learning_rate_leaves_parameters() {
    let mut env = small_inventory();
    let cfg = PpoConfig { lr: 0.0, steps_per_batch: 60, minibatch: 30, eval_interval: 120, eval_episodes: 2, keep_best: false, ..PpoConfig::default() };
    let before = PpoAgent::for_env(&env, &cfg).params.flat;
    let out = train(&mut env, &cfg, 600).map_err(|e| e.error).unwrap();
    assert_eq!(out.agent.params.flat, before);
    assert_eq!(out.curve.len(), 600 / 120);
    assert!(out.curve.windows(2).all(|w| w[1].steps > w[0].steps));
}

#[test]
fn training_is_reproducible() {
    let cfg = PpoConfig { steps_per_batch: 60, minibatch: 30, eval_interval: 120, eval_episodes: 2, ..PpoConfig::default() };
    let a = train(&mut small_inventory(), &cfg, 360).map_err(|e| e.error).unwrap();
    let b = train(&mut small_inventory(), &cfg, 360).map_err(|e| e.error).unwrap();
    assert_eq!(a.agent.params.flat, b.agent.params.flat);
    assert_eq!(a.curve, b.curve);
}

fn random_data(env: &mut SingleEchelonEnv, n: u64) -> Vec<Trajectory> {
    let mut r = rng::substream(7, stream::POLICY);
    let layout = env.action_layout().clone();
    let mut p = FnPolicy(move |_o: &EnvObservation| EnvAction::new(layout.bounds().iter().map(|&(lo, hi)| rng::uniform(&mut r, lo, hi)).collect()));
    (0..n).map(|k| run_episode(env, &mut p, k).unwrap()).collect()
}

fn tiny_dt() -> DtConfig {
    DtConfig { context: 3, embed_dim: 16, layers: 1, heads: 1, max_timestep: 6, batch_size: 64, lr: 3e-3, ..DtConfig::default() }
}

#[test]
fn dt_overfits_one_trajectory() {
    let mut env = small_inventory();
    let data = random_data(&mut env, 1);
    let out = dt_train(&data, &DtConfig { steps: 600, ..tiny_dt() }).unwrap();
    let last = *out.losses.last().unwrap();
    assert!(last < 1e-3, "final loss {last}");
}

#[test]
fn dt_initial_loss_is_target_variance() {
    let mut env = small_inventory();
    let data = random_data(&mut env, 20);
    let out = dt_train(&data, &DtConfig { steps: 1, batch_size: 1000, ..tiny_dt() }).unwrap();
    // Targets are standardized, so their variance is one.
    let l0 = out.losses[0];
    assert!((0.5..2.0).contains(&l0), "initial loss {l0}");
}

#[test]
fn dt_zero_learning_rate_is_flat() {
    let mut env = small_inventory();
    let data = random_data(&mut env, 10);
    let out = dt_train(&data, &DtConfig { steps: 5, lr: 0.0, batch_size: 1000, ..tiny_dt() }).unwrap();
    assert!(out.losses.iter().all(|&l| l == out.losses[0]));
}

#[test]
fn dt_rollouts_are_deterministic() {
    let mut env = small_inventory();
    let data = random_data(&mut env, 10);
    let model = dt_train(&data, &DtConfig { steps: 20, ..tiny_dt() }).unwrap().model;
    let a = dt_rollout(&mut env, &model, 50.0, 3).unwrap();
    let b = dt_rollout(&mut env, &model, 50.0, 3).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), env.horizon());
}

/// The low-return trajectories order 0, the high-return ones order the
/// maximum. A model conditioned on the return picks accordingly.
#[test]
fn dt_follows_the_target_return() {
    let mut env = small_inventory();
    let hi = env.action_layout().bounds()[0].1;
    let mut data = Vec::new();
    for k in 0..8 {
        let a = if k % 2 == 0 { 0.0 } else { hi };
        let mut p = FnPolicy(move |_o: &EnvObservation| EnvAction::new(vec![a]));
        data.push(run_episode(&mut env, &mut p, k).unwrap());
    }
    let ret = |a: f64| data.iter().filter(|t| t.records[0].act.components[0] == a).map(|t| t.total_return()).sum::<f64>() / 4.0;
    let (low, high) = (ret(0.0).min(ret(hi)), ret(0.0).max(ret(hi)));
    let high_action = if ret(hi) > ret(0.0) { hi } else { 0.0 };
    let model = dt_train(&data, &DtConfig { steps: 800, ..tiny_dt() }).unwrap().model;
    let mut first = |target: f64| dt_rollout(&mut env, &model, target, 100).unwrap().records[0].act.components[0];
    let (a_high, a_low) = (first(high), first(low));
    assert!((a_high - high_action).abs() < (a_low - high_action).abs(), "high {a_high}, low {a_low}");
}
