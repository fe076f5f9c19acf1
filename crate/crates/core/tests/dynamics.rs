//! Hand-computed transitions, compared bit for bit.

use lmm_core::collab::{CollabConfig, CollabDecision, CollabEnv};
use lmm_core::inventory::{DemandDist, EchelonParams, SerialChainConfig, SerialChainEnv, ShortageMode, SingleEchelonConfig, SingleEchelonEnv};
use lmm_core::pricing::{demand_rate, reference_price_update, CompetitorProcess, PricingConfig, PricingEnv, PricingMode};
use lmm_core::recsys::{purchase_probs, rating_update, ProductParams, RecsysConfig, RecsysEnv};
use lmm_core::sim::StepResult;

fn infos(r: &StepResult, keys: &[&str]) -> Vec<f64> {
    let mut v = vec![r.reward];
    v.extend(keys.iter().map(|k| r.info(k)));
    v
}

fn single(f: impl FnOnce(&mut SingleEchelonConfig)) -> SingleEchelonEnv {
    // price 5, holding 0.5, shortage 1, order cost 2
    let mut c = SingleEchelonConfig::default();
    f(&mut c);
    SingleEchelonEnv::new(c).unwrap()
}

#[test]
fn inventory_stockout() {
    let mut env = single(|c| c.initial_inventory = 3.0);
    let r = env.transition(2.0, 7.0);
    assert_eq!(infos(&r, &["sales", "lost", "on_hand"]), [19.0, 5.0, 2.0, 0.0]);
    assert_eq!(r.obs.features, [0.0]);
}

#[test]
fn inventory_demand_exactly_met() {
    let mut env = single(|c| c.initial_inventory = 4.0);
    let r = env.transition(1.0, 5.0);
    assert_eq!(infos(&r, &["sales", "lost", "on_hand"]), [23.0, 5.0, 0.0, 0.0]);
}

#[test]
fn inventory_surplus_pays_holding() {
    let mut env = single(|_| {});
    let r = env.transition(6.0, 2.0);
    assert_eq!(infos(&r, &["sales", "on_hand", "holding_cost", "order_cost"]), [-4.0, 2.0, 4.0, 2.0, 12.0]);
}

#[test]
fn inventory_idle_period() {
    let mut env = single(|c| c.initial_inventory = 3.0);
    let r = env.transition(0.0, 0.0);
    assert_eq!(infos(&r, &["sales", "on_hand"]), [-1.5, 0.0, 3.0]);
}

#[test]
fn inventory_lead_time_pipeline() {
    let mut env = single(|c| {
        c.lead_time = 2;
        c.initial_inventory = 5.0;
    });
    let a = env.transition(3.0, 2.0);
    assert_eq!((a.reward, a.info("arrival")), (2.5, 0.0));
    assert_eq!(a.obs.features, [3.0, 0.0, 3.0]);
    let b = env.transition(4.0, 2.0);
    assert_eq!((b.reward, b.obs.features.clone()), (1.5, vec![1.0, 3.0, 4.0]));
    let c = env.transition(0.0, 2.0);
    assert_eq!(infos(&c, &["arrival", "sales", "on_hand"]), [9.0, 3.0, 2.0, 2.0]);
    assert_eq!(c.obs.features, [2.0, 4.0, 0.0]);
}

#[test]
fn inventory_backlog_carryover() {
    let mut env = single(|c| c.mode = ShortageMode::Backlog);
    let a = env.transition(2.0, 6.0);
    assert_eq!(infos(&a, &["sales", "backlog", "lost"]), [2.0, 2.0, 4.0, 0.0]);
    assert_eq!(a.obs.features, [0.0, 4.0]);
    let b = env.transition(10.0, 3.0);
    assert_eq!(infos(&b, &["sales", "backlog", "on_hand"]), [13.5, 7.0, 0.0, 3.0]);
}

#[test]
fn inventory_backlog_accumulates() {
    let mut env = single(|c| c.mode = ShortageMode::Backlog);
    assert_eq!(env.transition(0.0, 3.0).reward, -3.0);
    let r = env.transition(0.0, 2.0);
    assert_eq!(infos(&r, &["backlog", "shortage_cost"]), [-5.0, 5.0, 5.0]);
}

fn chain(initial: [f64; 2]) -> SerialChainEnv {
    let e = |holding_cost, order_cost, init| EchelonParams { lead_time: 0, holding_cost, order_cost, max_order: 20.0, initial_inventory: init };
    SerialChainEnv::new(SerialChainConfig {
        horizon: 10,
        echelons: vec![e(0.5, 2.0, initial[0]), e(0.25, 1.0, initial[1])],
        demand: DemandDist::Constant { value: 0 },
        shortage_cost: 1.0,
        price: 5.0,
    })
    .unwrap()
}

#[test]
fn serial_same_period_delivery() {
    let mut env = chain([4.0, 10.0]);
    let r = env.transition(&[3.0, 6.0], 5.0);
    assert_eq!(infos(&r, &["profit_0", "profit_1", "on_hand_0", "on_hand_1", "shipped_1"]), [14.75, 18.0, -3.25, 2.0, 13.0, 3.0]);
}

#[test]
fn serial_retailer_backlog_then_recovery() {
    let mut env = chain([4.0, 10.0]);
    let a = env.transition(&[0.0, 0.0], 6.0);
    assert_eq!(infos(&a, &["profit_0", "profit_1", "backlog_0"]), [15.5, 18.0, -2.5, 2.0]);
    assert_eq!(a.obs.features, [-2.0, 6.0, 10.0, 0.0]);
    let b = env.transition(&[5.0, 0.0], 1.0);
    assert_eq!(infos(&b, &["profit_0", "profit_1", "sales", "backlog_0"]), [12.75, 4.0, 8.75, 3.0, 0.0]);
}

#[test]
fn serial_upstream_shortage() {
    let mut env = chain([0.0, 1.0]);
    let r = env.transition(&[3.0, 0.0], 0.0);
    assert_eq!(infos(&r, &["profit_0", "profit_1", "backlog_1", "on_hand_0"]), [-4.5, -6.5, 2.0, 2.0, 1.0]);
}

fn pricing(f: impl FnOnce(&mut PricingConfig)) -> PricingEnv {
    // holding 0.5, shortage 2, order cost 3, lead time 1, 10 units on hand
    let mut c = PricingConfig { ref_smoothing: 0.5, competitor: CompetitorProcess::Constant { price: 10.0 }, ..PricingConfig::default() };
    f(&mut c);
    PricingEnv::new(c).unwrap()
}

#[test]
fn pricing_order_in_transit() {
    let mut env = pricing(|_| {});
    let r = env.transition(8.0, 5.0, 4.0, 9.0);
    assert_eq!(infos(&r, &["arrival", "sales", "on_hand", "backlog"]), [14.0, 0.0, 4.0, 6.0, 0.0]);
    // (I, B, d, pipeline, competitor, reference)
    assert_eq!(r.obs.features, [6.0, 0.0, 4.0, 5.0, 9.0, 9.0]);
}

#[test]
fn pricing_stockout_backlogs() {
    let mut env = pricing(|_| {});
    env.transition(8.0, 5.0, 4.0, 9.0);
    let r = env.transition(10.0, 0.0, 12.0, 9.0);
    assert_eq!(infos(&r, &["arrival", "sales", "backlog"]), [108.0, 5.0, 11.0, 1.0]);
    assert_eq!(env.state().reference, 9.5);
}

#[test]
fn pricing_backlog_carryover() {
    let mut env = pricing(|_| {});
    env.transition(8.0, 5.0, 4.0, 9.0);
    env.transition(10.0, 0.0, 12.0, 9.0);
    let r = env.transition(6.0, 0.0, 0.0, 9.0);
    assert_eq!(infos(&r, &["sales", "backlog"]), [-2.0, 0.0, 1.0]);
}

#[test]
fn pricing_literal_equations_without_carryover() {
    let mut env = pricing(|c| c.carryover = false);
    env.transition(8.0, 5.0, 4.0, 9.0);
    env.transition(10.0, 0.0, 12.0, 9.0);
    let r = env.transition(6.0, 0.0, 0.0, 9.0);
    assert_eq!(infos(&r, &["sales", "backlog"]), [0.0, 0.0, 0.0]);
}

#[test]
fn pricing_lost_sales_penalty() {
    let mut env = pricing(|c| {
        c.mode = PricingMode::Lost;
        c.lead_time = 0;
        c.initial_inventory = 2.0;
    });
    let a = env.transition(5.0, 1.0, 7.0, 10.0);
    assert_eq!(infos(&a, &["sales", "backlog"]), [15.0 - 8.0 - 3.0, 3.0, 4.0]);
    let b = env.transition(5.0, 0.0, 1.0, 10.0);
    assert_eq!(infos(&b, &["sales", "backlog"]), [-2.0, 0.0, 1.0]);
}

#[test]
fn pricing_fixed_cost_only_when_ordering() {
    let mut env = pricing(|c| {
        c.fixed_cost = 10.0;
        c.lead_time = 0;
        c.initial_inventory = 5.0;
    });
    let a = env.transition(8.0, 0.0, 3.0, 10.0);
    assert_eq!(infos(&a, &["fixed_cost"]), [23.0, 0.0]);
    let b = env.transition(8.0, 4.0, 1.0, 10.0);
    assert_eq!(infos(&b, &["fixed_cost", "on_hand"]), [-16.5, 10.0, 5.0]);
}

#[test]
fn pricing_demand_rate_and_reference() {
    let zero = [0.0; 6];
    assert_eq!(demand_rate(9.0, 11.0, 7.0, &zero, 30.0, 1.0), 15.0);
    assert_eq!(demand_rate(9.0, 11.0, 7.0, &zero, 30.0, 0.5), 7.5);
    // z = 2 - 0.5 p + 0.5 o = 0 at p = 12, o = 8
    let beta = [2.0, -0.5, 0.5, 0.0, 0.0, 0.0];
    assert_eq!(demand_rate(12.0, 8.0, 3.0, &beta, 40.0, 1.0), 20.0);
    assert_eq!(reference_price_update(10.0, 6.0, 0.75), 9.0);
}

fn recsys(mode: ShortageMode) -> RecsysEnv {
    let prod = |price_out| ProductParams {
        lead_time: 0,
        price_out,
        price_in: 4.0,
        holding_cost: 0.5,
        shortage_cost: 2.0,
        max_order: 20.0,
        initial_inventory: 6.0,
    };
    RecsysEnv::new(RecsysConfig {
        horizon: 5,
        base_ratings: vec![vec![2.5, 3.0], vec![3.0, 2.5]],
        r_max: 5.0,
        efficiency: 0.5,
        capacity: vec![10, 6],
        products: vec![prod(10.0), prod(6.0)],
        mode,
        purchase: Default::default(),
        alpha_normalization: Default::default(),
    })
    .unwrap()
}

#[test]
fn recsys_alpha_ceiling_rating() {
    let r = rating_update(&[vec![2.0, 4.5]], &[vec![1.0, 0.5]], 1.0, 5.0);
    assert_eq!(r, [[5.0, 4.75]]);
    let r = rating_update(&[vec![1.0, 5.0]], &[vec![0.5, 1.0]], 0.5, 5.0);
    assert_eq!(r, [[2.0, 5.0]]);
}

#[test]
fn recsys_purchase_matrix() {
    let env = recsys(ShortageMode::LostSales);
    // Ratings [[2.5 + 2.5*0.5, 3], [3, 2.5 + 2.5*0.5]] -> column-wise softmax.
    let g = env.purchase_matrix(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
    assert_eq!(g[0][0], purchase_probs(&[3.75, 3.0])[0]);
    assert_eq!(g[1][1], purchase_probs(&[3.0, 3.75])[1]);
    assert_eq!(purchase_probs(&[1.5, 1.5]), [0.5, 0.5]);
}

#[test]
fn recsys_lost_sales_profit() {
    let mut env = recsys(ShortageMode::LostSales);
    let r = env.transition(&[2.0, 0.0], &[9.0, 3.0]);
    assert_eq!(infos(&r, &["profit_0", "profit_1", "lost_0", "on_hand_1"]), [86.5, 70.0, 16.5, 1.0, 3.0]);
    assert_eq!(r.obs.features, [0.0, 3.0]);
}

#[test]
fn recsys_backlog_net_inventory() {
    let mut env = recsys(ShortageMode::Backlog);
    let a = env.transition(&[2.0, 0.0], &[9.0, 3.0]);
    assert_eq!(a.obs.features, [-1.0, 3.0]);
    let b = env.transition(&[4.0, 0.0], &[0.0, 0.0]);
    assert_eq!(infos(&b, &["profit_0", "profit_1", "sales_0"]), [-9.0, -7.5, -1.5, 1.0]);
}

#[test]
fn collab_stockout_and_production() {
    // production costs [1.0, 1.6], order cost 0.5, stock [8, 6]
    let mut env = CollabEnv::new(CollabConfig::default()).unwrap();
    let d = CollabDecision { method: vec![0, 1], order: vec![5.0, 0.0], price: vec![4.0, 6.0], rec: vec![0.0, 1.0] };
    let r = env.transition(&d, &[10.0, 2.0]);
    assert_eq!(infos(&r, &["revenue", "production_cost", "order_cost", "lost_0"]), [36.5, 44.0, 5.0, 2.5, 2.0]);
    // (d, n, one-hot(u), q, p, k)
    assert_eq!(r.obs.features, [10.0, 2.0, 5.0, 4.0, 1.0, 0.0, 0.0, 1.0, 5.0, 0.0, 4.0, 6.0, 0.0, 1.0]);
}

#[test]
fn collab_expensive_method_and_zero_demand() {
    let mut env = CollabEnv::new(CollabConfig::default()).unwrap();
    let d = CollabDecision { method: vec![1, 1], order: vec![2.5, 5.0], price: vec![3.0, 3.0], rec: vec![0.5, 0.5] };
    let r = env.transition(&d, &[0.0, 0.0]);
    assert_eq!(infos(&r, &["production_cost", "order_cost"]), [-(12.0 + 3.75), 12.0, 3.75]);
    assert_eq!(env.state().on_hand, [10.5, 11.0]);
}

#[test]
fn collab_demand_rate() {
    let c = CollabConfig::default();
    // base 12 * logistic(2.5 - 0.5 * 5) * (1 + 0.5 * 1)
    assert_eq!(c.demand.rate(0, 5.0, 1.0), 9.0);
    assert_eq!(c.demand.rate(1, 5.0, 0.0), 4.0);
}
