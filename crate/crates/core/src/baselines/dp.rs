use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::inventory::{ShortageMode, SingleEchelonConfig};
use crate::sim::{EnvAction, EnvObservation, Policy};

/// Largest `(states x prices x orders x periods)` product `dp_solve` accepts.
pub const DP_SPACE_LIMIT: usize = 1_000_000;

/// Discretized lost-sales inventory and pricing problem with zero lead time.
///
/// Stock after ordering may not exceed `cap`; orders that would are
/// infeasible.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TinyMdpSpec {
    pub cap: usize,
    pub prices: Vec<f64>,
    pub orders: Vec<usize>,
    /// One demand pmf per price (or a single pmf shared by all prices).
    pub demand_pmf: Vec<Vec<f64>>,
    pub horizon: usize,
    pub order_cost: f64,
    pub fixed_cost: f64,
    pub holding_cost: f64,
    pub shortage_cost: f64,
    pub initial_inventory: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DpAction {
    pub price_index: usize,
    pub order: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DpSolution {
    /// Optimal expected return from the initial inventory at period 0.
    pub value: f64,
    /// `values[t][x]`, with `values[horizon] = 0`.
    pub values: Vec<Vec<f64>>,
    /// Greedy action for `policy[t][x]`.
    pub policy: Vec<Vec<DpAction>>,
}

impl DpSolution {
    /// Order-up-to level implied by the greedy decision at zero stock.
    pub fn base_stock_level(&self, t: usize) -> usize {
        self.policy[t][0].order
    }
}

impl TinyMdpSpec {
    /// Exact model of a zero-lead-time lost-sales [`SingleEchelonConfig`].
    pub fn from_single_echelon(cfg: &SingleEchelonConfig, cap: usize) -> Result<Self> {
        if cfg.lead_time != 0 || cfg.mode != ShortageMode::LostSales {
            return Err(invalid("the DP oracle covers zero lead time lost-sales instances"));
        }
        let mean = cfg.demand.mean();
        let support = (mean + 12.0 * mean.sqrt() + 20.0).ceil() as usize;
        let max_order = (cfg.max_order as usize).min(cap);
        Ok(Self {
            cap,
            prices: vec![cfg.price],
            orders: (0..=max_order).collect(),
            demand_pmf: vec![cfg.demand.pmf(support.max(cap))],
            horizon: cfg.horizon,
            order_cost: cfg.order_cost,
            fixed_cost: 0.0,
            holding_cost: cfg.holding_cost,
            shortage_cost: cfg.shortage_cost,
            initial_inventory: (cfg.initial_inventory as usize).min(cap),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.prices.is_empty() || self.orders.is_empty() {
            return Err(invalid("price and order grids must be nonempty"));
        }
        if self.demand_pmf.len() != 1 && self.demand_pmf.len() != self.prices.len() {
            return Err(invalid("need one demand pmf per price or a single shared pmf"));
        }
        for pmf in &self.demand_pmf {
            let mass: f64 = pmf.iter().sum();
            if (mass - 1.0).abs() > 1e-12 || pmf.iter().any(|p| *p < 0.0) {
                return Err(invalid("demand pmf must be non-negative and sum to 1"));
            }
        }
        if self.initial_inventory > self.cap {
            return Err(invalid("initial inventory exceeds cap"));
        }
        Ok(())
    }

    fn pmf(&self, price_index: usize) -> &[f64] {
        if self.demand_pmf.len() == 1 {
            &self.demand_pmf[0]
        } else {
            &self.demand_pmf[price_index]
        }
    }

    /// Expected immediate reward plus continuation for one state-action pair.
    pub fn q_value(&self, x: usize, action: DpAction, next: &[f64]) -> f64 {
        let y = x + action.order;
        let price = self.prices[action.price_index];
        let mut total = 0.0;
        for (d, &p) in self.pmf(action.price_index).iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let sales = d.min(y);
            let left = y - sales;
            let lost = d - sales;
            let r = price * sales as f64 - self.holding_cost * left as f64 - self.shortage_cost * lost as f64;
            total += p * (r + next[left]);
        }
        let fixed = if action.order > 0 { self.fixed_cost } else { 0.0 };
        total - self.order_cost * action.order as f64 - fixed
    }

    pub fn space_size(&self) -> usize {
        (self.cap + 1)
            .saturating_mul(self.prices.len())
            .saturating_mul(self.orders.len())
            .saturating_mul(self.horizon.max(1))
    }
}

/// Backward induction over the discretized MDP.
pub fn dp_solve(spec: &TinyMdpSpec) -> Result<DpSolution> {
    spec.validate()?;
    let entries = spec.space_size();
    if entries > DP_SPACE_LIMIT {
        return Err(Error::SpaceTooLarge { entries, limit: DP_SPACE_LIMIT });
    }
    let states = spec.cap + 1;
    let mut values = vec![vec![0.0; states]; spec.horizon + 1];
    let mut policy = vec![vec![DpAction { price_index: 0, order: 0 }; states]; spec.horizon];
    for t in (0..spec.horizon).rev() {
        for x in 0..states {
            let mut best = (DpAction { price_index: 0, order: 0 }, f64::NEG_INFINITY);
            for &q in &spec.orders {
                if x + q > spec.cap {
                    continue;
                }
                for pi in 0..spec.prices.len() {
                    let a = DpAction { price_index: pi, order: q };
                    let v = spec.q_value(x, a, &values[t + 1]);
                    if v > best.1 + 1e-12 {
                        best = (a, v);
                    }
                }
            }
            values[t][x] = best.1;
            policy[t][x] = best.0;
        }
    }
    let value = if spec.horizon == 0 { 0.0 } else { values[0][spec.initial_inventory] };
    Ok(DpSolution { value, values, policy })
}

/// Plays the DP-greedy order in a single-echelon environment (on-hand is
/// the first feature).
pub struct DpPolicy {
    pub solution: DpSolution,
    pub cap: usize,
}

impl Policy for DpPolicy {
    fn act(&mut self, obs: &EnvObservation) -> EnvAction {
        let t = obs.t.min(self.solution.policy.len().saturating_sub(1));
        let x = (obs.features[0].max(0.0) as usize).min(self.cap);
        EnvAction::new(vec![self.solution.policy[t][x].order as f64])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det_spec(h: usize) -> TinyMdpSpec {
        let mut pmf = vec![0.0; 4];
        pmf[3] = 1.0;
        TinyMdpSpec {
            cap: 5,
            prices: vec![4.0],
            orders: (0..=5).collect(),
            demand_pmf: vec![pmf],
            horizon: h,
            order_cost: 1.0,
            fixed_cost: 0.0,
            holding_cost: 0.5,
            shortage_cost: 0.0,
            initial_inventory: 0,
        }
    }

    #[test]
    fn zero_horizon_is_zero() {
        assert_eq!(dp_solve(&det_spec(0)).unwrap().value, 0.0);
    }

    #[test]
    fn one_period_deterministic_demand() {
        // Order exactly the demand: 4*3 - 1*3.
        let sol = dp_solve(&det_spec(1)).unwrap();
        assert_eq!(sol.value, 9.0);
        assert_eq!(sol.policy[0][0].order, 3);
    }

    #[test]
    fn rejects_huge_space() {
        let mut spec = det_spec(1);
        spec.cap = 2000;
        spec.orders = (0..=2000).collect();
        assert!(matches!(dp_solve(&spec), Err(Error::SpaceTooLarge { .. })));
    }

    #[test]
    fn rejects_bad_pmf() {
        let mut spec = det_spec(1);
        spec.demand_pmf = vec![vec![0.5, 0.4]];
        assert!(matches!(dp_solve(&spec), Err(Error::InvalidConfig(_))));
    }
}
