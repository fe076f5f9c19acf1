use proptest::prelude::*;

use lmm_core::autodiff::{numeric_gradient, relative_error, Tensor};
use lmm_core::checks::{KDE_MASS_TOL, MLP_GRAD_TOL, SOFTMAX_TOL};
use lmm_core::collab::{CollabConfig, CollabEnv};
use lmm_core::dt::{DtConfig, DtModel, Window};
use lmm_core::inventory::*;
use lmm_core::nn::{mlp_loss_and_grad, mlp_param_count, ActionAdapter};
use lmm_core::ppo::gae;
use lmm_core::pricing::{PricingConfig, PricingEnv};
use lmm_core::recsys::{purchase_probs, AlphaNormalization, ProductParams, PurchaseModel, RecsysConfig, RecsysEnv};
use lmm_core::rng::{self, stream};
use lmm_core::sim::*;

fn recsys_config() -> RecsysConfig {
    let prod = |po: f64| ProductParams { lead_time: 1, price_out: po, price_in: 4.0, holding_cost: 0.5, shortage_cost: 2.0, max_order: 20.0, initial_inventory: 6.0 };
    RecsysConfig {
        horizon: 8,
        base_ratings: vec![vec![2.5, 3.0], vec![3.0, 2.5]],
        r_max: 5.0,
        efficiency: 0.8,
        capacity: vec![10, 6],
        products: vec![prod(10.0), prod(6.0)],
        mode: ShortageMode::Backlog,
        purchase: PurchaseModel::Binomial,
        alpha_normalization: AlphaNormalization::PerProduct,
    }
}

fn serial_config(lead: usize, horizon: usize) -> SerialChainConfig {
    let e = |c: f64| EchelonParams { lead_time: lead, holding_cost: 0.5, order_cost: c, max_order: 15.0, initial_inventory: 5.0 };
    SerialChainConfig { horizon, echelons: vec![e(2.0), e(1.0)], demand: DemandDist::Poisson { rate: 5.0 }, shortage_cost: 1.0, price: 5.0 }
}

fn all_envs() -> Vec<Box<dyn Environment>> {
    vec![
        Box::new(SingleEchelonEnv::new(SingleEchelonConfig { lead_time: 2, mode: ShortageMode::Backlog, ..SingleEchelonConfig::default() }).unwrap()),
        Box::new(SerialChainEnv::new(serial_config(1, 10)).unwrap()),
        Box::new(PricingEnv::new(PricingConfig::default()).unwrap()),
        Box::new(RecsysEnv::new(recsys_config()).unwrap()),
        Box::new(CollabEnv::new(CollabConfig::default()).unwrap()),
    ]
}

/// Uniform actions from the adapter so simplex slices are valid.
fn random_episode(env: &mut dyn Environment, env_seed: u64, policy_seed: u64) -> Trajectory {
    let adapter = ActionAdapter::new(env.action_layout(), 0);
    let mut r = rng::substream(policy_seed, stream::POLICY);
    let mut p = FnPolicy(move |_o: &EnvObservation| {
        let raw: Vec<f64> = (0..adapter.n_components()).map(|_| rng::normal(&mut r, 0.0, 2.0)).collect();
        adapter.to_env(&raw)
    });
    run_episode(env, &mut p, env_seed).unwrap()
}

fn window(len: usize, vals: &[f64]) -> Window {
    let mut it = vals.iter().copied().cycle();
    let mut next = || it.next().unwrap();
    Window {
        rtg: (0..len).map(|_| next()).collect(),
        states: (0..len).map(|_| vec![next(), next()]).collect(),
        actions: (0..len).map(|_| vec![next()]).collect(),
        timesteps: (0..len).collect(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn mlp_gradients_match_differences(
        sizes in (1usize..4, 2usize..6, 1usize..3),
        rows in 1usize..4,
        seed in any::<u64>(),
        tanh_out in any::<bool>(),
    ) {
        let sizes = [sizes.0, sizes.1, sizes.2];
        let mut r = rng::substream(seed, stream::INIT);
        let mut normals = |n: usize, s: f64| (0..n).map(|_| rng::normal(&mut r, 0.0, s)).collect::<Vec<_>>();
        let flat = normals(mlp_param_count(&sizes), 0.7);
        let x = Tensor::from_vec(rows, sizes[0], normals(rows * sizes[0], 1.0));
        let y = Tensor::from_vec(rows, sizes[2], normals(rows * sizes[2], 1.0));
        let (_, analytic) = mlp_loss_and_grad(&sizes, &flat, &x, &y, tanh_out);
        let numeric = numeric_gradient(|p| mlp_loss_and_grad(&sizes, p, &x, &y, tanh_out).0, &flat, 1e-5);
        prop_assert!(relative_error(&analytic, &numeric) < MLP_GRAD_TOL);
    }

    #[test]
    fn gae_one_is_monte_carlo(
        steps in prop::collection::vec((-20i32..20, 0i32..64, prop::bool::weighted(0.2)), 1..30),
        half in any::<bool>(),
    ) {
        let rewards: Vec<f64> = steps.iter().map(|s| s.0 as f64).collect();
        let values: Vec<f64> = steps.iter().map(|s| s.1 as f64 / 4.0).collect();
        let mut dones: Vec<bool> = steps.iter().map(|s| s.2).collect();
        *dones.last_mut().unwrap() = true;
        let gamma = if half { 0.5 } else { 1.0 };
        let (adv, ret) = gae(&rewards, &values, &dones, gamma, 1.0);
        let mut g = 0.0;
        for t in (0..rewards.len()).rev() {
            if dones[t] {
                g = 0.0;
            }
            g = rewards[t] + gamma * g;
            prop_assert_eq!(adv[t], g - values[t]);
            prop_assert_eq!(ret[t], g);
        }
    }

    #[test]
    fn softmax_sums_to_one(xs in prop::collection::vec(-50.0f64..50.0, 1..10)) {
        let p = purchase_probs(&xs);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < SOFTMAX_TOL);
        prop_assert!(p.iter().all(|&q| (0.0..=1.0).contains(&q)));
    }

    #[test]
    fn kde_has_unit_mass(xs in prop::collection::vec(-1e3f64..1e3, 1..60)) {
        let mass = trapezoid(&kde(&xs, silverman_bandwidth(&xs)).unwrap());
        prop_assert!((mass - 1.0).abs() < KDE_MASS_TOL, "mass {}", mass);
    }

    #[test]
    fn rtg_is_suffix_sum(rs in prop::collection::vec(-100.0f64..100.0, 0..40)) {
        let g = returns_to_go(&rs);
        prop_assert_eq!(g.len(), rs.len());
        for t in 0..rs.len() {
            let next = if t + 1 < rs.len() { g[t + 1] } else { 0.0 };
            prop_assert_eq!(g[t], rs[t] + next);
        }
    }

    #[test]
    fn clamp_stays_in_bounds(xs in prop::collection::vec(prop_oneof![-1e3f64..1e3, Just(f64::NAN), Just(f64::INFINITY)], 8)) {
        for env in all_envs() {
            let layout = env.action_layout();
            let a = EnvAction::new(xs.iter().copied().cycle().take(layout.len()).collect());
            let (out, _) = layout.clamp(&a).unwrap();
            for ((v, (lo, hi)), slice_kind) in out.components.iter().zip(layout.bounds()).zip(layout.slices.iter().flat_map(|s| std::iter::repeat(&s.kind).take(s.len()))) {
                prop_assert!(*v >= lo && *v <= hi);
                if *slice_kind == SliceKind::Integer {
                    prop_assert_eq!(v.fract(), 0.0);
                }
            }
        }
    }

    #[test]
    fn adapter_actions_satisfy_simplex(raw in prop::collection::vec(-10.0f64..10.0, 6)) {
        let env = RecsysEnv::new(recsys_config()).unwrap();
        let adapter = ActionAdapter::new(env.action_layout(), 0);
        let a = adapter.to_env(&raw);
        let (orders, alpha) = env.parse_action(&a).unwrap();
        prop_assert_eq!(orders.len(), 2);
        prop_assert!(alpha.iter().flatten().all(|&x| (0.0..=1.0).contains(&x)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn episodes_are_deterministic(env_seed in any::<u64>(), policy_seed in any::<u64>()) {
        for mut env in all_envs() {
            let a = random_episode(env.as_mut(), env_seed, policy_seed);
            let b = random_episode(env.as_mut(), env_seed, policy_seed);
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn causal_prefix_invariance(len in 1usize..6, cut in 0usize..5, vals in prop::collection::vec(-2.0f64..2.0, 7), bump in 0.1f64..3.0) {
        let cut = cut % len;
        let cfg = DtConfig { context: 5, embed_dim: 8, layers: 2, heads: 2, max_timestep: 8, rtg_scale: 1.0, ..DtConfig::default() };
        let model = DtModel::new(2, 1, &cfg).unwrap();
        let w = window(len, &vals);
        let base = model.predict(&w).unwrap();
        let mut v = w.clone();
        v.actions[cut][0] += bump;
        for k in cut + 1..len {
            v.rtg[k] -= bump;
            v.states[k][1] += bump;
        }
        let p = model.predict(&v).unwrap();
        prop_assert_eq!(&p[..=cut], &base[..=cut]);
    }

    #[test]
    fn serial_chain_conserves_stock(orders in prop::collection::vec((0u32..16, 0u32..16, 0u32..12), 10)) {
        let mut env = SerialChainEnv::new(serial_config(1, 10)).unwrap();
        env.reset(0);
        for (a, b, d) in orders {
            let before = env.system_stock();
            let r = env.transition(&[a as f64, b as f64], d as f64);
            let after = env.system_stock();
            prop_assert!((after - (before + r.info("source_shipment") - r.info("sales"))).abs() < 1e-9);
            prop_assert!(env.stages().iter().all(|s| s.on_hand >= 0.0 && s.backlog >= 0.0 && s.on_hand * s.backlog == 0.0));
        }
    }

    #[test]
    fn pass_through_chain_is_single_echelon(steps in prop::collection::vec((0u32..16, 0u32..12), 1..12)) {
        let mut cfg = serial_config(0, 20);
        cfg.echelons[1].initial_inventory = 0.0;
        let mut chain = SerialChainEnv::new(cfg).unwrap();
        let mut single = SingleEchelonEnv::new(SingleEchelonConfig {
            horizon: 20,
            mode: ShortageMode::Backlog,
            initial_inventory: 5.0,
            ..SingleEchelonConfig::default()
        })
        .unwrap();
        chain.reset(0);
        single.reset(0);
        for (q, d) in steps {
            let (q, d) = (q as f64, d as f64);
            let rc = chain.transition(&[q, q], d);
            let rs = single.transition(q, d);
            prop_assert_eq!(rc.info("profit_0"), rs.reward);
            prop_assert_eq!(rc.info("sales"), rs.info("sales"));
            prop_assert_eq!(chain.stages()[0].on_hand - chain.stages()[0].backlog, single.state().on_hand - single.state().backlog);
            prop_assert_eq!(chain.stages()[1].on_hand, 0.0);
        }
    }
}
