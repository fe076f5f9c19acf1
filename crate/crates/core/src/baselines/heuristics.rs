use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::collab::CollabConfig;
use crate::inventory::{SerialChainConfig, SerialChainEnv, SingleEchelonConfig};
use crate::pricing::{PricingConfig, PricingView};
use crate::sim::{EnvAction, EnvObservation, Policy};

/// Order up to `level` from the current inventory position.
pub fn base_stock_act(inventory_position: f64, level: f64) -> f64 {
    (level - inventory_position).max(0.0)
}

/// Order up to `level` only when the position has dropped strictly below `s`.
pub fn ss_act(inventory_position: f64, s: f64, level: f64) -> f64 {
    if inventory_position < s {
        level - inventory_position
    } else {
        0.0
    }
}

/// Poisson point masses covering all but `tail` of the distribution.
pub fn poisson_pmf(rate: f64, tail: f64) -> Vec<f64> {
    if !(rate > 0.0) {
        return vec![1.0];
    }
    let mut out = Vec::new();
    let mut cumulative = 0.0;
    let ln_rate = rate.ln();
    let mut k = 0usize;
    loop {
        let kf = k as f64;
        let p = (kf * ln_rate - rate - libm::lgamma(kf + 1.0)).exp();
        out.push(p);
        cumulative += p;
        if 1.0 - cumulative < tail && kf > rate {
            break;
        }
        k += 1;
    }
    out
}

/// Tail mass left out of the truncated Poisson expectations.
pub const PMF_TAIL: f64 = 1e-9;

/// Expected one-period profit at `price` with `stock` units available for
/// serving demand plus `owed` backlog. Ordering costs are excluded since
/// they do not depend on the price.
pub fn expected_period_profit(cfg: &PricingConfig, price: f64, stock: f64, owed: f64, competitor: f64, reference: f64) -> f64 {
    let rate = cfg.rate(price, competitor, reference);
    let mut sales = 0.0;
    let mut leftover = 0.0;
    let mut short = 0.0;
    for (d, p) in poisson_pmf(rate, PMF_TAIL).into_iter().enumerate() {
        let want = d as f64 + owed;
        sales += p * want.min(stock);
        leftover += p * (stock - want).max(0.0);
        short += p * (want - stock).max(0.0);
    }
    price * sales - cfg.holding_cost * leftover - cfg.shortage_cost * short
}

/// Grid price with the highest expected one-period profit; ties keep the
/// lowest price.
pub fn best_price(cfg: &PricingConfig, grid: &[f64], stock: f64, view: &PricingView) -> f64 {
    let mut best = (grid[0], f64::NEG_INFINITY);
    for &p in grid {
        let v = expected_period_profit(cfg, p, stock, view.owed, view.competitor, view.reference);
        if v > best.1 {
            best = (p, v);
        }
    }
    best.0
}

/// Base-stock replenishment for a single-echelon environment.
pub struct BaseStock {
    pub level: f64,
    pub cfg: SingleEchelonConfig,
}

impl Policy for BaseStock {
    fn act(&mut self, obs: &EnvObservation) -> EnvAction {
        let ip = self.cfg.inventory_position(&obs.features);
        EnvAction::new(vec![base_stock_act(ip, self.level).min(self.cfg.max_order)])
    }
}

pub struct SsPolicy {
    pub s: f64,
    pub level: f64,
    pub cfg: SingleEchelonConfig,
}

impl Policy for SsPolicy {
    fn act(&mut self, obs: &EnvObservation) -> EnvAction {
        let ip = self.cfg.inventory_position(&obs.features);
        EnvAction::new(vec![ss_act(ip, self.s, self.level).min(self.cfg.max_order)])
    }
}

/// Always orders the same quantities.
pub struct ConstantOrder {
    pub action: EnvAction,
}

impl Policy for ConstantOrder {
    fn act(&mut self, _obs: &EnvObservation) -> EnvAction {
        self.action.clone()
    }
}

/// Echelon-local base-stock levels for a serial chain.
pub struct SerialBaseStock {
    pub levels: Vec<f64>,
    pub cfg: SerialChainConfig,
}

impl Policy for SerialBaseStock {
    fn act(&mut self, obs: &EnvObservation) -> EnvAction {
        let orders = (0..self.levels.len())
            .map(|m| {
                let ip = SerialChainEnv::inventory_position(&obs.features, &self.cfg, m);
                base_stock_act(ip, self.levels[m]).min(self.cfg.echelons[m].max_order)
            })
            .collect();
        EnvAction::new(orders)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum PricingRule {
    /// Order up to `base_stock`; list price while the position is at or below
    /// it, otherwise the best grid price for the higher stock.
    Bslp { base_stock: f64, list_price: f64 },
    /// `(s, S)` replenishment with the best grid price every period.
    Ssp { s: f64, level: f64 },
    /// Base-stock replenishment with the best grid price every period.
    Myopic { level: f64 },
}

/// Joint price and order heuristics for the pricing environment.
pub struct PricingHeuristic {
    pub rule: PricingRule,
    pub cfg: PricingConfig,
    pub grid: Vec<f64>,
}

impl PricingHeuristic {
    pub fn new(rule: PricingRule, cfg: PricingConfig, grid: Vec<f64>) -> Self {
        assert!(!grid.is_empty(), "price grid must be nonempty");
        Self { rule, cfg, grid }
    }

    /// `(price, order)` for an observation.
    pub fn decide(&self, features: &[f64]) -> (f64, f64) {
        let view = self.cfg.view(features);
        let ip = view.inventory_position();
        let q_max = self.cfg.max_order;
        match self.rule {
            PricingRule::Bslp { base_stock, list_price } => {
                let q = base_stock_act(ip, base_stock).min(q_max);
                let p = if ip <= base_stock {
                    list_price
                } else {
                    best_price(&self.cfg, &self.grid, view.available(q), &view)
                };
                (p, q)
            }
            PricingRule::Ssp { s, level } => {
                let q = ss_act(ip, s, level).min(q_max);
                (best_price(&self.cfg, &self.grid, view.available(q), &view), q)
            }
            PricingRule::Myopic { level } => {
                let q = base_stock_act(ip, level).min(q_max);
                (best_price(&self.cfg, &self.grid, view.available(q), &view), q)
            }
        }
    }
}

impl Policy for PricingHeuristic {
    fn act(&mut self, obs: &EnvObservation) -> EnvAction {
        let (p, q) = self.decide(&obs.features);
        EnvAction::new(vec![p, q])
    }
}

/// Collaborative-env rule: cheapest production method, full recommendation,
/// one fixed price, and order up to `cover` periods of expected demand.
/// Nothing is ordered in the last period since stock has no salvage value.
#[derive(Clone, Debug)]
pub struct CollabBaseStock {
    pub cover: f64,
    pub price: f64,
    pub cfg: CollabConfig,
}

impl CollabBaseStock {
    pub fn levels(&self) -> Vec<f64> {
        let p = self.price.clamp(self.cfg.price_min, self.cfg.price_max);
        (0..self.cfg.n_items()).map(|i| self.cover * self.cfg.demand.rate(i, p, 1.0)).collect()
    }
}

impl Policy for CollabBaseStock {
    fn act(&mut self, obs: &EnvObservation) -> EnvAction {
        let n = self.cfg.n_items();
        let cheapest = (0..self.cfg.n_methods())
            .fold(0, |best, j| if self.cfg.production_costs[j] < self.cfg.production_costs[best] { j } else { best });
        let last = obs.t + 1 >= self.cfg.horizon;
        let on_hand = &obs.features[n..2 * n];
        let mut out = vec![cheapest as f64; n];
        for (i, level) in self.levels().into_iter().enumerate() {
            out.push(if last { 0.0 } else { base_stock_act(on_hand[i], level).round().min(self.cfg.max_order) });
        }
        out.extend(vec![self.price; n]);
        out.extend(vec![1.0; n]);
        EnvAction::new(out)
    }
}

/// Evenly spaced grid of `n` points on `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}
