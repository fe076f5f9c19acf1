//! Collaborative environment coupling production method, ordering, pricing
//! and recommendation into one joint decision per period.
//!
//! Profit follows the supply-chain formula
//! `sum_i p_i min(n_i, d_i) - C_U - C_Q` with no holding or penalty terms.
//! Orders arrive one period later.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::pricing::logistic;
use crate::rng::{self, stream, StreamRng};
use crate::sim::{
    ActionLayout, ActionSlice, EnvAction, EnvObservation, Environment, Info, ObservationLayout, SliceKind,
    StepResult,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollabDemand {
    /// Base Poisson rate per item.
    pub base_rate: Vec<f64>,
    pub intercept: f64,
    pub price_sensitivity: f64,
    pub rec_lift: f64,
}

impl CollabDemand {
    /// `base_i * logistic(intercept - sensitivity * p) * (1 + lift * k)`.
    pub fn rate(&self, item: usize, price: f64, rec: f64) -> f64 {
        self.base_rate[item] * logistic(self.intercept - self.price_sensitivity * price) * (1.0 + self.rec_lift * rec)
    }
}

pub fn collab_demand(prices: &[f64], recs: &[f64], demand: &CollabDemand, rng: &mut StreamRng) -> Vec<f64> {
    prices
        .iter()
        .zip(recs)
        .enumerate()
        .map(|(i, (&p, &k))| rng::poisson(rng, demand.rate(i, p, k)) as f64)
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollabConfig {
    pub horizon: usize,
    /// Unit cost of each production method.
    pub production_costs: Vec<f64>,
    pub order_cost: f64,
    pub price_min: f64,
    pub price_max: f64,
    pub max_order: f64,
    pub demand: CollabDemand,
    #[serde(default)]
    pub initial_inventory: Vec<f64>,
}

impl Default for CollabConfig {
    /// Toy preset with two items and two production methods. Values invented.
    fn default() -> Self {
        Self {
            horizon: 20,
            production_costs: vec![1.0, 1.6],
            order_cost: 0.5,
            price_min: 2.0,
            price_max: 8.0,
            max_order: 20.0,
            demand: CollabDemand { base_rate: vec![12.0, 8.0], intercept: 2.5, price_sensitivity: 0.5, rec_lift: 0.5 },
            initial_inventory: vec![8.0, 6.0],
        }
    }
}

impl CollabConfig {
    pub fn n_items(&self) -> usize {
        self.demand.base_rate.len()
    }

    pub fn n_methods(&self) -> usize {
        self.production_costs.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_items() == 0 || self.n_methods() == 0 {
            return Err(invalid("need at least one item and one production method"));
        }
        if self.horizon < 1 {
            return Err(invalid("horizon must be at least 1"));
        }
        if self.production_costs.iter().any(|c| !(*c >= 0.0)) || !(self.order_cost >= 0.0) {
            return Err(invalid("production and ordering costs must be non-negative"));
        }
        if !(self.price_min <= self.price_max) || !(self.max_order > 0.0) {
            return Err(invalid("invalid price range or max_order"));
        }
        if !self.initial_inventory.is_empty() && self.initial_inventory.len() != self.n_items() {
            return Err(invalid("initial_inventory must have one entry per item"));
        }
        Ok(())
    }

    /// `(d, n, one-hot(u), q, p, k)`, each per item.
    pub fn observation_layout(&self) -> ObservationLayout {
        let mut layout = ObservationLayout::default();
        let n = self.n_items();
        for i in 0..n {
            layout.push(format!("demand_{i}"));
        }
        for i in 0..n {
            layout.push(format!("on_hand_{i}"));
        }
        for i in 0..n {
            for j in 0..self.n_methods() {
                layout.push(format!("method_{i}_is_{j}"));
            }
        }
        for name in ["order", "price", "rec"] {
            for i in 0..n {
                layout.push(format!("{name}_{i}"));
            }
        }
        layout
    }
}

/// Per-item vectors from the previous decision, plus current on-hand stock.
#[derive(Clone, Debug, PartialEq)]
pub struct CollabState {
    pub demand: Vec<f64>,
    pub on_hand: Vec<f64>,
    pub method: Vec<usize>,
    pub order: Vec<f64>,
    pub price: Vec<f64>,
    pub rec: Vec<f64>,
    pub t: usize,
}

/// One joint decision: production method, order, price, recommendation.
#[derive(Clone, Debug, PartialEq)]
pub struct CollabDecision {
    pub method: Vec<usize>,
    pub order: Vec<f64>,
    pub price: Vec<f64>,
    pub rec: Vec<f64>,
}

pub struct CollabEnv {
    cfg: CollabConfig,
    layout: ActionLayout,
    state: CollabState,
    demand_rng: StreamRng,
}

impl CollabEnv {
    pub fn new(cfg: CollabConfig) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.n_items();
        let layout = ActionLayout::new(vec![
            ActionSlice::uniform("method", SliceKind::Integer, n, 0.0, (cfg.n_methods() - 1) as f64),
            ActionSlice::uniform("order", SliceKind::Integer, n, 0.0, cfg.max_order),
            ActionSlice::uniform("price", SliceKind::Continuous, n, cfg.price_min, cfg.price_max),
            ActionSlice::uniform("rec", SliceKind::Continuous, n, 0.0, 1.0),
        ]);
        let state = Self::initial_state(&cfg);
        Ok(Self { cfg, layout, state, demand_rng: rng::substream(0, stream::DEMAND) })
    }

    fn initial_state(cfg: &CollabConfig) -> CollabState {
        let n = cfg.n_items();
        let on_hand = if cfg.initial_inventory.is_empty() { vec![0.0; n] } else { cfg.initial_inventory.clone() };
        CollabState {
            demand: vec![0.0; n],
            on_hand,
            method: vec![0; n],
            order: vec![0.0; n],
            price: vec![0.0; n],
            rec: vec![0.0; n],
            t: 0,
        }
    }

    pub fn config(&self) -> &CollabConfig {
        &self.cfg
    }

    pub fn state(&self) -> &CollabState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut CollabState {
        &mut self.state
    }

    pub fn decode(&self, action: &EnvAction) -> Result<CollabDecision> {
        let (a, _) = self.layout.clamp(action)?;
        let n = self.cfg.n_items();
        let c = &a.components;
        Ok(CollabDecision {
            method: c[..n].iter().map(|&u| u as usize).collect(),
            order: c[n..2 * n].to_vec(),
            price: c[2 * n..3 * n].to_vec(),
            rec: c[3 * n..4 * n].to_vec(),
        })
    }

    pub fn observe(&self) -> EnvObservation {
        let s = &self.state;
        let mut features = s.demand.clone();
        features.extend(&s.on_hand);
        for &u in &s.method {
            features.extend((0..self.cfg.n_methods()).map(|j| if j == u { 1.0 } else { 0.0 }));
        }
        features.extend(&s.order);
        features.extend(&s.price);
        features.extend(&s.rec);
        EnvObservation { features, t: s.t }
    }

    /// Profit and inventory update for a decision and demand realization.
    pub fn transition(&mut self, decision: &CollabDecision, demand: &[f64]) -> StepResult {
        let cfg = &self.cfg;
        let s = &mut self.state;
        let mut revenue = 0.0;
        let mut production = 0.0;
        let mut ordering = 0.0;
        let mut info = Info::new();
        for i in 0..cfg.n_items() {
            let sales = s.on_hand[i].min(demand[i]);
            revenue += decision.price[i] * sales;
            production += cfg.production_costs[decision.method[i]] * decision.order[i];
            ordering += cfg.order_cost * decision.order[i];
            info.insert(format!("sales_{i}"), sales);
            info.insert(format!("lost_{i}"), demand[i] - sales);
            s.on_hand[i] = (s.on_hand[i] - demand[i]).max(0.0) + decision.order[i];
        }
        s.demand = demand.to_vec();
        s.method = decision.method.clone();
        s.order = decision.order.clone();
        s.price = decision.price.clone();
        s.rec = decision.rec.clone();
        s.t += 1;

        let reward = revenue - production - ordering;
        info.insert("revenue".into(), revenue);
        info.insert("production_cost".into(), production);
        info.insert("order_cost".into(), ordering);
        let done = s.t >= cfg.horizon;
        StepResult { obs: self.observe(), reward, done, info }
    }
}

impl Environment for CollabEnv {
    fn reset(&mut self, seed: u64) -> EnvObservation {
        self.demand_rng = rng::substream(seed, stream::DEMAND);
        self.state = Self::initial_state(&self.cfg);
        self.observe()
    }

    fn step(&mut self, action: &EnvAction) -> Result<StepResult> {
        if self.state.t >= self.cfg.horizon {
            return Err(Error::EpisodeFinished);
        }
        let decision = self.decode(action)?;
        let demand = collab_demand(&decision.price, &decision.rec, &self.cfg.demand, &mut self.demand_rng);
        Ok(self.transition(&decision, &demand))
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
