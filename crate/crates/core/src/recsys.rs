//! Inventory management coupled with a recommendation system.
//!
//! Recommendation intensities lift customer ratings, ratings set softmax
//! purchase probabilities, and the resulting binomial demand hits an
//! `N`-product inventory system.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::inventory::ShortageMode;
use crate::rng::{self, stream, StreamRng};
use crate::sim::{
    ActionLayout, ActionSlice, EnvAction, EnvObservation, Environment, Info, ObservationLayout, SliceKind,
    StepResult,
};

/// Tolerance on the simplex constraint of recommendation intensities.
pub const ALPHA_TOLERANCE: f64 = 1e-6;

/// `R = R_base + (R_max - R_base) * alpha * E`, from the base ratings each
/// period. Matrices are indexed `[product][customer]`.
pub fn rating_update(base: &[Vec<f64>], alpha: &[Vec<f64>], efficiency: f64, r_max: f64) -> Vec<Vec<f64>> {
    base.iter()
        .zip(alpha)
        .map(|(rb, ra)| rb.iter().zip(ra).map(|(&r, &a)| r + (r_max - r) * a * efficiency).collect())
        .collect()
}

/// Softmax over products of one customer's ratings.
pub fn purchase_probs(ratings: &[f64]) -> Vec<f64> {
    let max = ratings.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = ratings.iter().map(|r| (r - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PurchaseModel {
    /// Independent `Binomial(c_j, gamma_ij)` per product.
    #[default]
    Binomial,
    /// Exactly `c_j` purchases split multinomially by `gamma`.
    Multinomial,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AlphaNormalization {
    /// Each product's intensities over customers sum to one.
    #[default]
    PerProduct,
    /// Each customer's intensities over products sum to one.
    PerCustomer,
}

/// Per-product demand of one customer.
pub fn sample_customer_demand(capacity: u64, probs: &[f64], model: PurchaseModel, rng: &mut StreamRng) -> Vec<u64> {
    match model {
        PurchaseModel::Binomial => probs.iter().map(|&g| rng::binomial(rng, capacity, g)).collect(),
        PurchaseModel::Multinomial => rng::multinomial(rng, capacity, probs),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProductParams {
    pub lead_time: usize,
    pub price_out: f64,
    pub price_in: f64,
    pub holding_cost: f64,
    pub shortage_cost: f64,
    pub max_order: f64,
    #[serde(default)]
    pub initial_inventory: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecsysConfig {
    pub horizon: usize,
    /// `[product][customer]` base ratings.
    pub base_ratings: Vec<Vec<f64>>,
    pub r_max: f64,
    pub efficiency: f64,
    /// Purchasing capacity per customer.
    pub capacity: Vec<u64>,
    pub products: Vec<ProductParams>,
    #[serde(default)]
    pub mode: ShortageMode,
    #[serde(default)]
    pub purchase: PurchaseModel,
    #[serde(default)]
    pub alpha_normalization: AlphaNormalization,
}

impl RecsysConfig {
    pub fn n_products(&self) -> usize {
        self.products.len()
    }

    pub fn n_customers(&self) -> usize {
        self.capacity.len()
    }

    pub fn validate(&self) -> Result<()> {
        let (n, m) = (self.n_products(), self.n_customers());
        if n == 0 || m == 0 {
            return Err(invalid("need at least one product and one customer"));
        }
        if self.horizon < 1 {
            return Err(invalid("horizon must be at least 1"));
        }
        if self.base_ratings.len() != n || self.base_ratings.iter().any(|r| r.len() != m) {
            return Err(invalid("base_ratings must be products x customers"));
        }
        if self.base_ratings.iter().flatten().any(|&r| !(0.0..=self.r_max).contains(&r)) {
            return Err(invalid("base ratings must lie in [0, r_max]"));
        }
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(invalid("efficiency must lie in [0, 1]"));
        }
        for p in &self.products {
            let v = [p.price_out, p.price_in, p.holding_cost, p.shortage_cost, p.initial_inventory];
            if v.iter().any(|x| !(*x >= 0.0)) || !(p.max_order > 0.0) {
                return Err(invalid("product prices and costs must be non-negative"));
            }
        }
        Ok(())
    }

    /// `({I^i}, {q^i_{t-L^i}..q^i_{t-1}})` per product. In backlog mode the
    /// first entry is net inventory (on-hand minus backlog).
    pub fn observation_layout(&self) -> ObservationLayout {
        let mut layout = ObservationLayout::default();
        for i in 0..self.n_products() {
            layout.push(format!("p{i}_inventory"));
        }
        for (i, p) in self.products.iter().enumerate() {
            for k in (1..=p.lead_time).rev() {
                layout.push(format!("p{i}_pipeline_t-{k}"));
            }
        }
        layout
    }

    pub fn simplex_groups(&self) -> Vec<Vec<usize>> {
        let (n, m) = (self.n_products(), self.n_customers());
        match self.alpha_normalization {
            AlphaNormalization::PerProduct => (0..n).map(|i| (0..m).map(|j| i * m + j).collect()).collect(),
            AlphaNormalization::PerCustomer => (0..m).map(|j| (0..n).map(|i| i * m + j).collect()).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProductState {
    pub on_hand: f64,
    pub backlog: f64,
    pub pipeline: VecDeque<f64>,
}

pub struct RecsysEnv {
    cfg: RecsysConfig,
    layout: ActionLayout,
    products: Vec<ProductState>,
    t: usize,
    demand_rng: StreamRng,
}

impl RecsysEnv {
    pub fn new(cfg: RecsysConfig) -> Result<Self> {
        cfg.validate()?;
        let (n, m) = (cfg.n_products(), cfg.n_customers());
        let layout = ActionLayout::new(vec![
            ActionSlice {
                name: "order",
                kind: SliceKind::Integer,
                lo: vec![0.0; n],
                hi: cfg.products.iter().map(|p| p.max_order).collect(),
            },
            ActionSlice::uniform("alpha", SliceKind::Simplex { groups: cfg.simplex_groups() }, n * m, 0.0, 1.0),
        ]);
        let mut env = Self { layout, products: Vec::new(), t: 0, demand_rng: rng::substream(0, stream::DEMAND), cfg };
        env.reset(0);
        Ok(env)
    }

    pub fn config(&self) -> &RecsysConfig {
        &self.cfg
    }

    pub fn products(&self) -> &[ProductState] {
        &self.products
    }

    pub fn products_mut(&mut self) -> &mut [ProductState] {
        &mut self.products
    }

    pub fn observe(&self) -> EnvObservation {
        let mut features: Vec<f64> = self.products.iter().map(|p| p.on_hand - p.backlog).collect();
        for p in &self.products {
            features.extend(p.pipeline.iter().copied());
        }
        EnvObservation { features, t: self.t }
    }

    /// Splits a flat action into orders and the `[product][customer]`
    /// intensity matrix, checking the simplex constraint.
    pub fn parse_action(&self, action: &EnvAction) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let (applied, _) = self.layout.clamp(action)?;
        let (n, m) = (self.cfg.n_products(), self.cfg.n_customers());
        let orders = applied.components[..n].to_vec();
        let flat = &applied.components[n..];
        for (g, group) in self.cfg.simplex_groups().iter().enumerate() {
            let sum: f64 = group.iter().map(|&k| flat[k]).sum();
            if (sum - 1.0).abs() > ALPHA_TOLERANCE {
                return Err(Error::AlphaConstraintViolated { group: g, sum });
            }
        }
        let alpha = (0..n).map(|i| flat[i * m..(i + 1) * m].to_vec()).collect();
        Ok((orders, alpha))
    }

    /// Ratings and purchase probabilities (`[product][customer]`) under `alpha`.
    pub fn purchase_matrix(&self, alpha: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let ratings = rating_update(&self.cfg.base_ratings, alpha, self.cfg.efficiency, self.cfg.r_max);
        let (n, m) = (self.cfg.n_products(), self.cfg.n_customers());
        let mut gamma = vec![vec![0.0; m]; n];
        for j in 0..m {
            let column: Vec<f64> = ratings.iter().map(|r| r[j]).collect();
            for (i, g) in purchase_probs(&column).into_iter().enumerate() {
                gamma[i][j] = g;
            }
        }
        gamma
    }

    /// Inventory dynamics and profit for given orders and per-product demand.
    pub fn transition(&mut self, orders: &[f64], demand: &[f64]) -> StepResult {
        let mut info = Info::new();
        let mut reward = 0.0;
        let backlog_mode = self.cfg.mode == ShortageMode::Backlog;
        for (i, (s, p)) in self.products.iter_mut().zip(&self.cfg.products).enumerate() {
            let q = orders[i];
            let arrival = if p.lead_time == 0 {
                q
            } else {
                s.pipeline.push_back(q);
                s.pipeline.pop_front().unwrap_or(0.0)
            };
            let d = demand[i] + if backlog_mode { s.backlog } else { 0.0 };
            let available = s.on_hand + arrival;
            let sales = d - (d - available).max(0.0);
            let unmet = (d - sales).max(0.0);
            s.on_hand = (available - sales).max(0.0);
            s.backlog = if backlog_mode { unmet } else { 0.0 };
            let profit = p.price_out * sales - p.price_in * q - p.holding_cost * s.on_hand - p.shortage_cost * unmet;
            reward += profit;
            info.insert(format!("demand_{i}"), demand[i]);
            info.insert(format!("sales_{i}"), sales);
            info.insert(format!("lost_{i}"), unmet);
            info.insert(format!("on_hand_{i}"), s.on_hand);
            info.insert(format!("profit_{i}"), profit);
        }
        self.t += 1;
        StepResult { obs: self.observe(), reward, done: self.t >= self.cfg.horizon, info }
    }
}

impl Environment for RecsysEnv {
    fn reset(&mut self, seed: u64) -> EnvObservation {
        self.demand_rng = rng::substream(seed, stream::DEMAND);
        self.t = 0;
        self.products = self
            .cfg
            .products
            .iter()
            .map(|p| ProductState {
                on_hand: p.initial_inventory,
                backlog: 0.0,
                pipeline: VecDeque::from(vec![0.0; p.lead_time]),
            })
            .collect();
        self.observe()
    }

    fn step(&mut self, action: &EnvAction) -> Result<StepResult> {
        if self.t >= self.cfg.horizon {
            return Err(Error::EpisodeFinished);
        }
        let (orders, alpha) = self.parse_action(action)?;
        let gamma = self.purchase_matrix(&alpha);
        let n = self.cfg.n_products();
        let mut demand = vec![0.0; n];
        for (j, &cap) in self.cfg.capacity.iter().enumerate() {
            let column: Vec<f64> = gamma.iter().map(|g| g[j]).collect();
            let draws = sample_customer_demand(cap, &column, self.cfg.purchase, &mut self.demand_rng);
            for (i, d) in draws.into_iter().enumerate() {
                demand[i] += d as f64;
            }
        }
        Ok(self.transition(&orders, &demand))
    }

    fn horizon(&self) -> usize {
        self.cfg.horizon
    }

    fn action_layout(&self) -> &ActionLayout {
        &self.layout
    }

    fn observation_layout(&self) -> ObservationLayout {
        self.cfg.observation_layout()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rating_examples() {
        let base = vec![vec![3.0]];
        assert_eq!(rating_update(&base, &[vec![0.0]], 0.8, 5.0), vec![vec![3.0]]);
        let r = rating_update(&base, &[vec![0.5]], 0.8, 5.0)[0][0];
        assert!((r - 3.8).abs() < 1e-12);
        assert_eq!(rating_update(&base, &[vec![1.0]], 1.0, 5.0), vec![vec![5.0]]);
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(purchase_probs(&[2.0, 2.0, 2.0, 2.0]), vec![0.25; 4]);
        let g = purchase_probs(&[1.0, 1.0 + core::f64::consts::LN_2]);
        assert!((g[0] - 1.0 / 3.0).abs() < 1e-12 && (g[1] - 2.0 / 3.0).abs() < 1e-12);
        let big = purchase_probs(&[900.0, 1000.0, 950.0]);
        assert!((big.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn capacity_edge_cases() {
        let mut rng = rng::substream(0, stream::DEMAND);
        assert_eq!(sample_customer_demand(0, &[0.5, 0.5], PurchaseModel::Binomial, &mut rng), vec![0, 0]);
        assert_eq!(sample_customer_demand(7, &[1.0], PurchaseModel::Binomial, &mut rng), vec![7]);
    }
}
