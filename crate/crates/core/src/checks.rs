//! Self-contained oracle checks: exact DP against enumeration, gradients
//! against finite differences, estimator identities and hand-computed
//! transitions. Each check reports instead of panicking.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::autodiff::{numeric_gradient, relative_error, Graph, Tensor};
use crate::baselines::{dp_solve, DpAction, TinyMdpSpec};
use crate::collab::{CollabConfig, CollabDecision, CollabEnv};
use crate::dt::{DtConfig, DtModel, Window};
use crate::inventory::{DemandDist, ShortageMode, SingleEchelonConfig, SingleEchelonEnv};
use crate::nn::{mlp_loss_and_grad, mlp_param_count};
use crate::ppo::gae;
use crate::pricing::{PricingConfig, PricingEnv, PricingMode};
use crate::recsys::{purchase_probs, rating_update};
use crate::rng::{self, stream, StreamRng};
use crate::sim::{kde, silverman_bandwidth, trapezoid, returns_to_go};

pub const MLP_GRAD_TOL: f64 = 1e-5;
pub const DT_GRAD_TOL: f64 = 1e-4;
pub const KDE_MASS_TOL: f64 = 1e-3;
pub const SOFTMAX_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, passed: bool, detail: String) -> Self {
        Self { name: name.into(), passed, detail }
    }
}

/// Every check, in a fixed order.
pub fn run_all() -> Vec<Check> {
    let mut out = vec![dp_matches_enumeration(), dp_dominates_base_stock(), tuned_base_stock_near_dp()];
    out.push(mlp_gradients(100, 1));
    out.push(transformer_gradients(5, 2));
    out.push(gae_matches_monte_carlo());
    out.push(causal_mask_invariance());
    out.push(softmax_normalization());
    out.push(kde_normalization());
    out.extend(dynamics_vectors());
    out
}

fn two_unit_spec() -> TinyMdpSpec {
    TinyMdpSpec {
        cap: 2,
        prices: vec![3.0, 5.0],
        orders: vec![0, 1, 2],
        demand_pmf: vec![vec![0.2, 0.5, 0.3], vec![0.5, 0.4, 0.1]],
        horizon: 2,
        order_cost: 1.0,
        fixed_cost: 0.5,
        holding_cost: 0.25,
        shortage_cost: 1.5,
        initial_inventory: 1,
    }
}

/// Expected return of a fixed Markov policy `pol[t][x]`.
fn policy_value(spec: &TinyMdpSpec, pol: &[Vec<DpAction>]) -> f64 {
    let mut next = vec![0.0; spec.cap + 1];
    for t in (0..spec.horizon).rev() {
        next = (0..=spec.cap).map(|x| spec.q_value(x, pol[t][x], &next)).collect();
    }
    next[spec.initial_inventory]
}

/// Backward induction equals the best of all deterministic Markov policies.
pub fn dp_matches_enumeration() -> Check {
    let spec = two_unit_spec();
    let sol = match dp_solve(&spec) {
        Ok(s) => s,
        Err(e) => return Check::new("dp vs enumeration", false, format!("{e}")),
    };
    let states = spec.cap + 1;
    let per_state: Vec<Vec<DpAction>> = (0..states)
        .map(|x| {
            let mut v = Vec::new();
            for &q in spec.orders.iter().filter(|&&q| x + q <= spec.cap) {
                for pi in 0..spec.prices.len() {
                    v.push(DpAction { price_index: pi, order: q });
                }
            }
            v
        })
        .collect();
    let slots = states * spec.horizon;
    let mut idx = vec![0usize; slots];
    let mut best = f64::NEG_INFINITY;
    let mut count = 0usize;
    loop {
        let pol: Vec<Vec<DpAction>> =
            (0..spec.horizon).map(|t| (0..states).map(|x| per_state[x][idx[t * states + x]]).collect()).collect();
        best = best.max(policy_value(&spec, &pol));
        count += 1;
        let mut k = 0;
        while k < slots {
            idx[k] += 1;
            if idx[k] < per_state[k % states].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == slots {
            break;
        }
    }
    let gap = (best - sol.value).abs();
    Check::new("dp vs enumeration", gap < 1e-12, format!("dp {:.6} best of {count} policies {:.6}", sol.value, best))
}

fn oracle_inventory() -> SingleEchelonConfig {
    SingleEchelonConfig {
        horizon: 8,
        demand: DemandDist::Poisson { rate: 3.0 },
        max_order: 10.0,
        ..SingleEchelonConfig::default()
    }
}

/// Exact expected return of order-up-to `level` on a tiny MDP.
pub fn base_stock_value(spec: &TinyMdpSpec, level: usize) -> f64 {
    let pol: Vec<Vec<DpAction>> = (0..spec.horizon)
        .map(|_| {
            (0..=spec.cap)
                .map(|x| {
                    let q = level.saturating_sub(x).min(*spec.orders.last().unwrap_or(&0));
                    DpAction { price_index: 0, order: q.min(spec.cap - x) }
                })
                .collect()
        })
        .collect();
    policy_value(spec, &pol)
}

pub fn dp_dominates_base_stock() -> Check {
    let spec = match TinyMdpSpec::from_single_echelon(&oracle_inventory(), 12).and_then(|s| dp_solve(&s).map(|d| (s, d))) {
        Ok(v) => v,
        Err(e) => return Check::new("dp dominates base stock", false, format!("{e}")),
    };
    let (spec, sol) = spec;
    let worst = (0..=spec.cap).map(|s| sol.value - base_stock_value(&spec, s)).fold(f64::INFINITY, f64::min);
    Check::new("dp dominates base stock", worst >= -1e-9, format!("smallest dp margin {worst:.3e} over levels 0..={}", spec.cap))
}

pub fn tuned_base_stock_near_dp() -> Check {
    let r = TinyMdpSpec::from_single_echelon(&oracle_inventory(), 12).and_then(|s| dp_solve(&s).map(|d| (s, d)));
    let (spec, sol) = match r {
        Ok(v) => v,
        Err(e) => return Check::new("tuned base stock near dp", false, format!("{e}")),
    };
    let (best, _) = (0..=spec.cap)
        .map(|s| (s, base_stock_value(&spec, s)))
        .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
    let dp_level = sol.base_stock_level(0);
    Check::new("tuned base stock near dp", best.abs_diff(dp_level) <= 1, format!("tuned {best}, dp greedy {dp_level}"))
}

fn normals(rng: &mut StreamRng, n: usize, std: f64) -> Vec<f64> {
    (0..n).map(|_| rng::normal(rng, 0.0, std)).collect()
}

/// Largest relative error over `cases` random MLPs.
pub fn mlp_gradients(cases: usize, seed: u64) -> Check {
    let mut rng = rng::substream(seed, stream::INIT);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let sizes = [1 + rng::uniform_int(&mut rng, 0, 3) as usize, 2 + rng::uniform_int(&mut rng, 0, 4) as usize, 1 + rng::uniform_int(&mut rng, 0, 2) as usize];
        let rows = 1 + rng::uniform_int(&mut rng, 0, 3) as usize;
        let flat = normals(&mut rng, mlp_param_count(&sizes), 0.7);
        let x = Tensor::from_vec(rows, sizes[0], normals(&mut rng, rows * sizes[0], 1.0));
        let y = Tensor::from_vec(rows, sizes[2], normals(&mut rng, rows * sizes[2], 1.0));
        let tanh_out = rng::uniform(&mut rng, 0.0, 1.0) < 0.5;
        let (_, analytic) = mlp_loss_and_grad(&sizes, &flat, &x, &y, tanh_out);
        let numeric = numeric_gradient(|p| mlp_loss_and_grad(&sizes, p, &x, &y, tanh_out).0, &flat, 1e-5);
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    Check::new("mlp gradients", worst < MLP_GRAD_TOL, format!("max relative error {worst:.2e} over {cases} cases"))
}

fn tiny_dt(seed: u64) -> DtModel {
    let cfg = DtConfig { context: 3, embed_dim: 8, layers: 1, heads: 1, max_timestep: 6, rtg_scale: 1.0, seed, ..DtConfig::default() };
    DtModel::new(2, 2, &cfg).expect("valid tiny config")
}

fn random_window(rng: &mut StreamRng, len: usize, state_dim: usize, act_dim: usize) -> Window {
    Window {
        rtg: normals(rng, len, 1.0),
        states: (0..len).map(|_| normals(rng, state_dim, 1.0)).collect(),
        actions: (0..len).map(|_| normals(rng, act_dim, 1.0)).collect(),
        timesteps: (0..len).map(|t| t + rng::uniform_int(rng, 0, 2) as usize).collect(),
    }
}

/// Largest relative error over `cases` random one-layer one-head models.
pub fn transformer_gradients(cases: usize, seed: u64) -> Check {
    let mut rng = rng::substream(seed, stream::INIT);
    let mut worst = 0.0f64;
    for k in 0..cases {
        let mut model = tiny_dt(seed.wrapping_add(k as u64));
        let windows: Vec<Window> = (1..=2).map(|len| random_window(&mut rng, len + 1, 2, 2)).collect();
        let refs: Vec<&Window> = windows.iter().collect();
        let analytic = match model.loss_and_grad(&refs, None) {
            Ok((_, g)) => g,
            Err(e) => return Check::new("transformer gradients", false, format!("{e}")),
        };
        let flat = model.flat.clone();
        let numeric = numeric_gradient(
            |p| {
                model.flat.copy_from_slice(p);
                model.loss_and_grad(&refs, None).map(|(l, _)| l).unwrap_or(f64::NAN)
            },
            &flat,
            1e-5,
        );
        model.flat = flat;
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    Check::new("transformer gradients", worst < DT_GRAD_TOL, format!("max relative error {worst:.2e} over {cases} cases"))
}

/// With lambda = 1, advantages are discounted returns minus values. Dyadic
/// inputs make every operation exact, so equality is bitwise.
pub fn gae_matches_monte_carlo() -> Check {
    let mut rng = rng::substream(3, stream::SAMPLING);
    let mut mismatches = 0;
    for batch in 0..50 {
        let n = 1 + rng::uniform_int(&mut rng, 0, 29) as usize;
        let rewards: Vec<f64> = (0..n).map(|_| rng::uniform_int(&mut rng, 0, 40) as f64 - 20.0).collect();
        let values: Vec<f64> = (0..n).map(|_| rng::uniform_int(&mut rng, 0, 64) as f64 / 4.0).collect();
        let mut dones: Vec<bool> = (0..n).map(|_| rng::uniform(&mut rng, 0.0, 1.0) < 0.2).collect();
        dones[n - 1] = true;
        let gamma = if batch % 2 == 0 { 1.0 } else { 0.5 };
        let (adv, _) = gae(&rewards, &values, &dones, gamma, 1.0);
        let mut g = 0.0;
        for t in (0..n).rev() {
            if dones[t] {
                g = 0.0;
            }
            g = rewards[t] + gamma * g;
            if adv[t] != g - values[t] {
                mismatches += 1;
            }
        }
    }
    Check::new("gae(1) equals monte carlo", mismatches == 0, format!("{mismatches} mismatching entries over 50 batches"))
}

/// Predictions at positions before a perturbation are bitwise unchanged,
/// exhaustively for context lengths up to 4.
pub fn causal_mask_invariance() -> Check {
    let mut rng = rng::substream(4, stream::SAMPLING);
    let cfg = DtConfig { context: 4, embed_dim: 8, layers: 2, heads: 2, max_timestep: 8, rtg_scale: 1.0, seed: 9, ..DtConfig::default() };
    let model = match DtModel::new(2, 1, &cfg) {
        Ok(m) => m,
        Err(e) => return Check::new("causal mask invariance", false, format!("{e}")),
    };
    let mut failures = 0;
    let mut cases = 0;
    for len in 1..=4 {
        let w = random_window(&mut rng, len, 2, 1);
        let base = match model.predict(&w) {
            Ok(p) => p,
            Err(e) => return Check::new("causal mask invariance", false, format!("{e}")),
        };
        for cut in 0..len {
            let mut v = w.clone();
            v.actions[cut][0] += 1.0;
            for k in cut + 1..len {
                v.rtg[k] += 1.0;
                v.states[k][0] -= 1.0;
                v.actions[k][0] += 2.0;
                v.timesteps[k] += 1;
            }
            let p = model.predict(&v).unwrap_or_default();
            cases += 1;
            if p.len() != len || p[..=cut] != base[..=cut] {
                failures += 1;
            }
        }
    }
    Check::new("causal mask invariance", failures == 0, format!("{failures} of {cases} perturbations leaked backward"))
}

pub fn softmax_normalization() -> Check {
    let mut rng = rng::substream(5, stream::SAMPLING);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let cols = 1 + rng::uniform_int(&mut rng, 0, 6) as usize;
        let data = normals(&mut rng, 3 * cols, 20.0);
        let mut g = Graph::new();
        let x = g.constant(Tensor::from_vec(3, cols, data.clone()));
        let s = g.softmax_rows(x);
        let c = g.causal_softmax_rows(x);
        for v in [s, c] {
            let t = g.value(v);
            for r in 0..t.rows {
                worst = worst.max((t.row(r).iter().sum::<f64>() - 1.0).abs());
            }
        }
        worst = worst.max((purchase_probs(&data[..cols]).iter().sum::<f64>() - 1.0).abs());
    }
    Check::new("softmax normalization", worst < SOFTMAX_TOL, format!("max |sum - 1| = {worst:.2e}"))
}

pub fn kde_normalization() -> Check {
    let mut rng = rng::substream(6, stream::SAMPLING);
    let mut worst = 0.0f64;
    for n in [1usize, 5, 50, 200] {
        let s = normals(&mut rng, n, 30.0);
        let mass = kde(&s, silverman_bandwidth(&s)).map(|p| trapezoid(&p)).unwrap_or(f64::NAN);
        worst = worst.max((mass - 1.0).abs());
    }
    Check::new("kde normalization", worst < KDE_MASS_TOL, format!("max |mass - 1| = {worst:.2e}"))
}

fn exact(name: &str, got: &[f64], want: &[f64]) -> Check {
    Check::new(name, got == want, format!("got {got:?}, want {want:?}"))
}

/// A few hand-computed transitions covering each environment's boundary
/// cases.
pub fn dynamics_vectors() -> Vec<Check> {
    let mut out = Vec::new();

    // Stockout with lost sales: 3 on hand + 2 ordered, demand 7.
    // reward = 5*5 - 0 - 1*2 - 2*2 = 19.
    let mut env = SingleEchelonEnv::new(SingleEchelonConfig { initial_inventory: 3.0, ..SingleEchelonConfig::default() }).expect("valid");
    let r = env.transition(2.0, 7.0);
    out.push(exact("inventory stockout", &[r.reward, r.info("sales"), r.info("lost"), r.info("on_hand")], &[19.0, 5.0, 2.0, 0.0]));

    // Backlog carryover: 4 unmet units are served next period first.
    let cfg = SingleEchelonConfig { mode: ShortageMode::Backlog, ..SingleEchelonConfig::default() };
    let mut env = SingleEchelonEnv::new(cfg).expect("valid");
    let a = env.transition(2.0, 6.0);
    let b = env.transition(10.0, 3.0);
    out.push(exact(
        "inventory backlog carryover",
        &[a.reward, a.info("backlog"), b.info("sales"), b.info("backlog"), b.info("on_hand"), b.reward],
        &[10.0 - 4.0 - 4.0, 4.0, 7.0, 0.0, 3.0, 35.0 - 1.5 - 20.0],
    ));

    // Zero order pays no fixed cost; a positive order pays it once.
    let cfg = PricingConfig { lead_time: 0, fixed_cost: 10.0, initial_inventory: 5.0, mode: PricingMode::Lost, ..PricingConfig::default() };
    let mut env = PricingEnv::new(cfg).expect("valid");
    let a = env.transition(8.0, 0.0, 3.0, 10.0);
    let b = env.transition(8.0, 4.0, 1.0, 10.0);
    out.push(exact(
        "pricing zero-order fixed cost",
        &[a.reward, a.info("fixed_cost"), b.reward, b.info("fixed_cost")],
        &[24.0 - 1.0, 0.0, 8.0 - 2.5 - 12.0 - 10.0, 10.0],
    ));

    // Rating at alpha = 1 with full efficiency reaches the ceiling.
    let r = rating_update(&[vec![2.0, 4.5]], &[vec![1.0, 0.5]], 1.0, 5.0);
    out.push(exact("recsys alpha-ceiling rating", &r[0], &[5.0, 4.75]));

    // Collab: stock 8 meets demand 10 partly; new order lands after sales.
    let mut env = CollabEnv::new(CollabConfig::default()).expect("valid");
    let d = CollabDecision { method: vec![0, 1], order: vec![5.0, 0.0], price: vec![4.0, 6.0], rec: vec![0.0, 1.0] };
    let r = env.transition(&d, &[10.0, 2.0]);
    let s = env.state();
    out.push(exact(
        "collab stockout and production",
        &[r.reward, s.on_hand[0], s.on_hand[1], r.info("lost_0")],
        &[32.0 + 12.0 - 5.0 - 2.5, 5.0, 4.0, 2.0],
    ));

    // Returns-to-go are suffix sums.
    out.push(exact("returns to go", &returns_to_go(&[1.0, 2.0, 3.0]), &[6.0, 5.0, 3.0]));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        for c in run_all() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
