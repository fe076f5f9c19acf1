use lmm_core::baselines::*;
use lmm_core::inventory::*;
use lmm_core::pricing::*;
use lmm_core::recsys::{purchase_probs, rating_update};
use lmm_core::rng::{self, stream};
use lmm_core::sim::*;

fn coin_flip_inventory() -> SingleEchelonConfig {
    SingleEchelonConfig { horizon: 2, demand: DemandDist::Uniform { lo: 0, hi: 1 }, max_order: 2.0, ..SingleEchelonConfig::default() }
}

/// Expected return of a history-dependent plan: `q0`, then `q1[d0]`.
/// Demand paths are enumerated through the environment itself.
fn plan_value(cfg: &SingleEchelonConfig, q0: f64, q1: [f64; 2]) -> Option<f64> {
    let mut env = SingleEchelonEnv::new(cfg.clone()).unwrap();
    let mut total = 0.0;
    for d0 in 0..2 {
        for d1 in 0..2 {
            env.reset(0);
            let r0 = env.transition(q0, d0 as f64).reward;
            let x = env.state().on_hand;
            if x + q1[d0] > 2.0 || q0 > 2.0 {
                return None;
            }
            let r1 = env.transition(q1[d0], d1 as f64).reward;
            total += 0.25 * (r0 + r1);
        }
    }
    Some(total)
}

#[test]
fn dp_matches_demand_path_enumeration() {
    let cfg = coin_flip_inventory();
    let sol = dp_solve(&TinyMdpSpec::from_single_echelon(&cfg, 2).unwrap()).unwrap();
    let mut best = f64::NEG_INFINITY;
    for q0 in 0..=2 {
        for a in 0..=2 {
            for b in 0..=2 {
                if let Some(v) = plan_value(&cfg, q0 as f64, [a as f64, b as f64]) {
                    best = best.max(v);
                }
            }
        }
    }
    assert!((best - sol.value).abs() < 1e-12, "enumeration {best}, dp {}", sol.value);
}

#[test]
fn tuned_base_stock_within_one_step_of_dp() {
    let cfg = SingleEchelonConfig::default();
    let sol = dp_solve(&TinyMdpSpec::from_single_echelon(&cfg, 20).unwrap()).unwrap();
    let mut env = SingleEchelonEnv::new(cfg.clone()).unwrap();
    let cands = PolicySpec::grid(PolicyFamily::BaseStock, &[(0..=20).map(f64::from).collect()]).unwrap();
    let r = grid_tune(cands, &mut env, |s| s.single_echelon_policy(&cfg).unwrap(), 400, 0).unwrap();
    let tuned = r.best.params()[0];
    let dp = sol.base_stock_level(0) as f64;
    assert!((tuned - dp).abs() <= 1.0, "tuned {tuned}, dp {dp}");
    assert!(r.stats.mean <= sol.value + 3.0 * r.stats.std_error());
}

#[test]
fn demand_rate_hand_value() {
    let beta = [0.0, -0.5, 0.0, 0.0, 0.0, 0.0];
    let rate = demand_rate(2.0, 9.0, 7.0, &beta, 40.0, 1.0);
    assert!((rate - 40.0 / (1.0 + 1f64.exp())).abs() < 1e-12);
    assert!((rate - 10.757_6).abs() < 1e-4);
}

#[test]
fn poisson_sampler_moments() {
    let mut r = rng::substream(11, stream::DEMAND);
    let xs: Vec<f64> = (0..100_000).map(|_| rng::poisson(&mut r, 5.0) as f64).collect();
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
    assert!((4.93..=5.07).contains(&mean), "mean {mean}");
    assert!((4.8..=5.2).contains(&var), "variance {var}");
}

#[test]
fn binomial_sampler_mean() {
    let mut r = rng::substream(12, stream::DEMAND);
    let n = 100_000;
    let mean = (0..n).map(|_| rng::binomial(&mut r, 10, 0.3) as f64).sum::<f64>() / n as f64;
    assert!((2.95..=3.05).contains(&mean), "mean {mean}");
}

#[test]
fn competitor_processes() {
    let cyc = CompetitorProcess::Cyclic { mean: 6.0, amplitude: 1.0, period: 4.0 };
    let mut r = rng::substream(0, stream::COMPETITOR);
    let path: Vec<f64> = (0..5).map(|t| competitor_price(t, &cyc, &mut r)).collect();
    for (got, want) in path.iter().zip([7.0, 6.0, 5.0, 6.0, 7.0]) {
        assert!((got - want).abs() < 1e-12, "{path:?}");
    }
    let ar = CompetitorProcess::Ar1 { mean: 10.0, rho: 0.5, sigma: 0.0, initial: 14.0 };
    let path: Vec<f64> = (0..4).map(|t| competitor_price(t, &ar, &mut r)).collect();
    assert_eq!(path, vec![14.0, 12.0, 11.0, 10.5]);
}

#[test]
fn reference_price_smoothing() {
    assert_eq!(reference_price_update(10.0, 4.0, 1.0), 10.0);
    assert_eq!(reference_price_update(10.0, 4.0, 0.0), 4.0);
    assert!((reference_price_update(10.0, 4.0, 0.7) - 8.2).abs() < 1e-12);
}

#[test]
fn rating_and_purchase_hand_values() {
    let r = rating_update(&[vec![3.0]], &[vec![0.5]], 0.8, 5.0);
    assert!((r[0][0] - 3.8).abs() < 1e-12);
    let p = purchase_probs(&[1.3, 1.3 + 2f64.ln()]);
    assert!((p[0] - 1.0 / 3.0).abs() < 1e-12 && (p[1] - 2.0 / 3.0).abs() < 1e-12);
    // Full recommendation with full efficiency reaches the ceiling.
    assert_eq!(rating_update(&[vec![2.0]], &[vec![1.0]], 1.0, 5.0)[0][0], 5.0);
}

fn pricing_features() -> (PricingConfig, Vec<f64>) {
    let cfg = PricingConfig::default();
    let mut env = PricingEnv::new(cfg.clone()).unwrap();
    (cfg, env.reset(0).features)
}

#[test]
fn myopic_price_matches_brute_force() {
    let (cfg, f) = pricing_features();
    let view = cfg.view(&f);
    let grid = vec![6.0, 11.0];
    let h = PricingHeuristic::new(PricingRule::Myopic { level: 25.0 }, cfg.clone(), grid.clone());
    let (p, q) = h.decide(&f);
    let stock = view.available(q);
    let brute = grid
        .iter()
        .copied()
        .max_by(|a, b| {
            let va = expected_period_profit(&cfg, *a, stock, view.owed, view.competitor, view.reference);
            let vb = expected_period_profit(&cfg, *b, stock, view.owed, view.competitor, view.reference);
            va.total_cmp(&vb)
        })
        .unwrap();
    assert_eq!(p, brute);
    assert_eq!(q, base_stock_act(view.inventory_position(), 25.0).min(cfg.max_order));
}

#[test]
fn ssp_without_order_prices_like_myopic() {
    let (cfg, f) = pricing_features();
    let ip = cfg.view(&f).inventory_position();
    let grid = linspace(4.0, 16.0, 13);
    let ss = PricingHeuristic::new(PricingRule::Ssp { s: ip - 1.0, level: ip + 10.0 }, cfg.clone(), grid.clone());
    let my = PricingHeuristic::new(PricingRule::Myopic { level: ip }, cfg, grid);
    let (a, b) = (ss.decide(&f), my.decide(&f));
    assert_eq!(a.1, 0.0);
    assert_eq!(a, b);
}

#[test]
fn bslp_uses_list_price_below_target() {
    let (cfg, f) = pricing_features();
    let ip = cfg.view(&f).inventory_position();
    let grid = linspace(4.0, 16.0, 13);
    let at = PricingHeuristic::new(PricingRule::Bslp { base_stock: ip, list_price: 13.0 }, cfg.clone(), grid.clone());
    assert_eq!(at.decide(&f), (13.0, 0.0));
    let below = PricingHeuristic::new(PricingRule::Bslp { base_stock: ip + 4.0, list_price: 13.0 }, cfg.clone(), grid.clone());
    assert_eq!(below.decide(&f), (13.0, 4.0));
    let above = PricingHeuristic::new(PricingRule::Bslp { base_stock: ip - 4.0, list_price: 13.0 }, cfg.clone(), grid.clone());
    let view = cfg.view(&f);
    assert_eq!(above.decide(&f), (best_price(&cfg, &grid, view.available(0.0), &view), 0.0));
}

#[test]
fn dominated_candidate_never_wins() {
    let cfg = SingleEchelonConfig::default();
    let mut env = SingleEchelonEnv::new(cfg.clone()).unwrap();
    // Never ordering earns only shortage penalties.
    for seed in 0..5 {
        let cands = PolicySpec::grid(PolicyFamily::BaseStock, &[vec![0.0, 3.0, 6.0]]).unwrap();
        let r = grid_tune(cands, &mut env, |s| s.single_echelon_policy(&cfg).unwrap(), 20, seed).unwrap();
        assert_ne!(r.best.params()[0], 0.0);
        let zero = r.table.iter().find(|(s, _)| s.params()[0] == 0.0).unwrap().1;
        assert!(r.table.iter().all(|(_, m)| *m >= zero));
    }
}
