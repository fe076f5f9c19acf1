//! Single-echelon and serial multi-echelon inventory environments.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::{self, stream, StreamRng};
use crate::sim::{
    ActionLayout, ActionSlice, EnvAction, EnvObservation, Environment, Info, ObservationLayout, SliceKind,
    StepResult,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DemandDist {
    Poisson { rate: f64 },
    /// Integers in `lo..=hi`.
    Uniform { lo: u64, hi: u64 },
    /// Normal truncated at zero and rounded.
    Normal { mean: f64, std: f64 },
    Constant { value: u64 },
}

impl Default for DemandDist {
    fn default() -> Self {
        DemandDist::Poisson { rate: 5.0 }
    }
}

impl DemandDist {
    pub fn sample(&self, rng: &mut StreamRng) -> f64 {
        match *self {
            DemandDist::Poisson { rate } => rng::poisson(rng, rate) as f64,
            DemandDist::Uniform { lo, hi } => rng::uniform_int(rng, lo, hi) as f64,
            DemandDist::Normal { mean, std } => rng::normal(rng, mean, std).max(0.0).round(),
            DemandDist::Constant { value } => value as f64,
        }
    }

    /// Probability mass on `0..=max`, with the tail above `max` folded into
    /// the last entry.
    pub fn pmf(&self, max: usize) -> Vec<f64> {
        let mut p = vec![0.0; max + 1];
        match *self {
            DemandDist::Poisson { rate } => {
                if rate <= 0.0 {
                    p[0] = 1.0;
                } else {
                    let ln_rate = rate.ln();
                    for (k, slot) in p.iter_mut().enumerate() {
                        let kf = k as f64;
                        *slot = (kf * ln_rate - rate - libm::lgamma(kf + 1.0)).exp();
                    }
                }
            }
            DemandDist::Uniform { lo, hi } => {
                let w = 1.0 / (hi.saturating_sub(lo) + 1) as f64;
                for d in lo..=hi {
                    p[(d as usize).min(max)] += w;
                }
            }
            DemandDist::Normal { mean, std } => {
                let cdf = |x: f64| 0.5 * (1.0 + libm::erf((x - mean) / (std.max(1e-12) * core::f64::consts::SQRT_2)));
                for (k, slot) in p.iter_mut().enumerate() {
                    let below = if k == 0 { 0.0 } else { cdf(k as f64 - 0.5) };
                    *slot = cdf(k as f64 + 0.5) - below;
                }
            }
            DemandDist::Constant { value } => p[(value as usize).min(max)] = 1.0,
        }
        let head: f64 = p[..max].iter().sum();
        p[max] = (1.0 - head).max(0.0);
        p
    }

    pub fn mean(&self) -> f64 {
        match *self {
            DemandDist::Poisson { rate } => rate,
            DemandDist::Uniform { lo, hi } => 0.5 * (lo + hi) as f64,
            DemandDist::Normal { mean, .. } => mean.max(0.0),
            DemandDist::Constant { value } => value as f64,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ShortageMode {
    #[default]
    LostSales,
    Backlog,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SingleEchelonConfig {
    pub horizon: usize,
    pub lead_time: usize,
    #[serde(default)]
    pub demand: DemandDist,
    pub holding_cost: f64,
    /// Per-unit penalty on lost or backlogged demand.
    pub shortage_cost: f64,
    pub order_cost: f64,
    pub price: f64,
    #[serde(default)]
    pub mode: ShortageMode,
    pub max_order: f64,
    #[serde(default)]
    pub initial_inventory: f64,
}

impl Default for SingleEchelonConfig {
    fn default() -> Self {
        Self {
            horizon: 20,
            lead_time: 0,
            demand: DemandDist::default(),
            holding_cost: 0.5,
            shortage_cost: 1.0,
            order_cost: 2.0,
            price: 5.0,
            mode: ShortageMode::LostSales,
            max_order: 15.0,
            initial_inventory: 0.0,
        }
    }
}

impl SingleEchelonConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            return Err(invalid("horizon must be at least 1"));
        }
        let costs = [self.holding_cost, self.shortage_cost, self.order_cost, self.price];
        if costs.iter().any(|c| !(*c >= 0.0)) {
            return Err(invalid("costs and price must be non-negative"));
        }
        if !(self.max_order > 0.0) {
            return Err(invalid("max_order must be positive"));
        }
        if !(self.initial_inventory >= 0.0) {
            return Err(invalid("initial_inventory must be non-negative"));
        }
        Ok(())
    }

    /// `(I_t, pipeline q_{t-L}..q_{t-1}, backlog?)`.
    pub fn observation_layout(&self) -> ObservationLayout {
        let mut layout = ObservationLayout::default();
        layout.push("on_hand");
        for k in (1..=self.lead_time).rev() {
            layout.push(format!("pipeline_t-{k}"));
        }
        if self.mode == ShortageMode::Backlog {
            layout.push("backlog");
        }
        layout
    }

    /// On-hand plus in-transit minus backlog, read from an observation.
    pub fn inventory_position(&self, features: &[f64]) -> f64 {
        let pipeline: f64 = features[1..1 + self.lead_time].iter().sum();
        let backlog = if self.mode == ShortageMode::Backlog { features[1 + self.lead_time] } else { 0.0 };
        features[0] + pipeline - backlog
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SingleEchelonState {
    pub on_hand: f64,
    /// Orders placed `L..1` periods ago, oldest first.
    pub pipeline: VecDeque<f64>,
    pub backlog: f64,
    pub t: usize,
}

pub struct SingleEchelonEnv {
    cfg: SingleEchelonConfig,
    layout: ActionLayout,
    state: SingleEchelonState,
    demand_rng: StreamRng,
}

impl SingleEchelonEnv {
    pub fn new(cfg: SingleEchelonConfig) -> Result<Self> {
        cfg.validate()?;
        let layout = ActionLayout::new(vec![ActionSlice::uniform("order", SliceKind::Integer, 1, 0.0, cfg.max_order)]);
        let state = SingleEchelonState {
            on_hand: cfg.initial_inventory,
            pipeline: VecDeque::from(vec![0.0; cfg.lead_time]),
            backlog: 0.0,
            t: 0,
        };
        Ok(Self { demand_rng: rng::substream(0, stream::DEMAND), cfg, layout, state })
    }

    pub fn config(&self) -> &SingleEchelonConfig {
        &self.cfg
    }

    pub fn state(&self) -> &SingleEchelonState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut SingleEchelonState {
        &mut self.state
    }

    pub fn observe(&self) -> EnvObservation {
        let mut features = Vec::with_capacity(2 + self.cfg.lead_time);
        features.push(self.state.on_hand);
        features.extend(self.state.pipeline.iter().copied());
        if self.cfg.mode == ShortageMode::Backlog {
            features.push(self.state.backlog);
        }
        EnvObservation { features, t: self.state.t }
    }

    /// Applies one period with a given demand realization. `order` must
    /// already be within bounds.
    pub fn transition(&mut self, order: f64, demand: f64) -> StepResult {
        let cfg = &self.cfg;
        let s = &mut self.state;
        let arrival = if cfg.lead_time == 0 {
            order
        } else {
            s.pipeline.push_back(order);
            s.pipeline.pop_front().unwrap_or(0.0)
        };
        let available = s.on_hand + arrival;
        let serviceable = demand + s.backlog;
        let sales = serviceable.min(available);
        let unmet = serviceable - sales;
        s.on_hand = available - sales;
        let (lost, backlog) = match cfg.mode {
            ShortageMode::LostSales => (unmet, 0.0),
            ShortageMode::Backlog => (0.0, unmet),
        };
        s.backlog = backlog;
        s.t += 1;

        let revenue = cfg.price * sales;
        let holding = cfg.holding_cost * s.on_hand;
        let shortage = cfg.shortage_cost * unmet;
        let ordering = cfg.order_cost * order;
        let reward = revenue - holding - shortage - ordering;

        let mut info = Info::new();
        info.insert("demand".into(), demand);
        info.insert("arrival".into(), arrival);
        info.insert("sales".into(), sales);
        info.insert("lost".into(), lost);
        info.insert("backlog".into(), backlog);
        info.insert("revenue".into(), revenue);
        info.insert("holding_cost".into(), holding);
        info.insert("shortage_cost".into(), shortage);
        info.insert("order_cost".into(), ordering);
        info.insert("on_hand".into(), s.on_hand);
        StepResult { obs: self.observe(), reward, done: self.state.t >= cfg.horizon, info }
    }
}

impl Environment for SingleEchelonEnv {
    fn reset(&mut self, seed: u64) -> EnvObservation {
        self.demand_rng = rng::substream(seed, stream::DEMAND);
        self.state = SingleEchelonState {
            on_hand: self.cfg.initial_inventory,
            pipeline: VecDeque::from(vec![0.0; self.cfg.lead_time]),
            backlog: 0.0,
            t: 0,
        };
        self.observe()
    }

    fn step(&mut self, action: &EnvAction) -> Result<StepResult> {
        if self.state.t >= self.cfg.horizon {
            return Err(Error::EpisodeFinished);
        }
        let (applied, clamped) = self.layout.clamp(action)?;
        let demand = self.cfg.demand.sample(&mut self.demand_rng);
        let mut res = self.transition(applied.components[0], demand);
        res.info.insert("clamped".into(), clamped as f64);
        Ok(res)
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

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EchelonParams {
    /// Shipping lead time from the upstream stage into this echelon.
    pub lead_time: usize,
    pub holding_cost: f64,
    pub order_cost: f64,
    pub max_order: f64,
    #[serde(default)]
    pub initial_inventory: f64,
}

/// Serial chain; echelon index 0 faces the customer, the last echelon
/// orders from an unconstrained source.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SerialChainConfig {
    pub horizon: usize,
    pub echelons: Vec<EchelonParams>,
    #[serde(default)]
    pub demand: DemandDist,
    /// Customer backlog penalty, charged at the retailer only.
    pub shortage_cost: f64,
    /// Customer price at the retailer.
    pub price: f64,
}

impl SerialChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.echelons.len() < 2 {
            return Err(invalid("a serial chain needs at least 2 echelons"));
        }
        if self.horizon < 1 {
            return Err(invalid("horizon must be at least 1"));
        }
        for e in &self.echelons {
            if !(e.holding_cost >= 0.0 && e.order_cost >= 0.0 && e.max_order > 0.0 && e.initial_inventory >= 0.0) {
                return Err(invalid("echelon costs must be non-negative and max_order positive"));
            }
        }
        if !(self.shortage_cost >= 0.0 && self.price >= 0.0) {
            return Err(invalid("shortage_cost and price must be non-negative"));
        }
        Ok(())
    }

    /// Per echelon: `(net inventory, pipeline oldest first, last order
    /// received from downstream)`. Net inventory is on-hand minus owed
    /// backlog; at most one of the two is positive after every period.
    pub fn observation_layout(&self) -> ObservationLayout {
        let mut layout = ObservationLayout::default();
        for (m, e) in self.echelons.iter().enumerate() {
            layout.push(format!("e{m}_net_inventory"));
            for k in (1..=e.lead_time).rev() {
                layout.push(format!("e{m}_pipeline_t-{k}"));
            }
            layout.push(format!("e{m}_last_downstream_order"));
        }
        layout
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EchelonState {
    pub on_hand: f64,
    /// Units owed downstream (customer backlog at the retailer).
    pub backlog: f64,
    pub pipeline: VecDeque<f64>,
    pub last_downstream_order: f64,
}

pub struct SerialChainEnv {
    cfg: SerialChainConfig,
    layout: ActionLayout,
    stages: Vec<EchelonState>,
    t: usize,
    demand_rng: StreamRng,
}

impl SerialChainEnv {
    pub fn new(cfg: SerialChainConfig) -> Result<Self> {
        cfg.validate()?;
        let slice = ActionSlice {
            name: "order",
            kind: SliceKind::Integer,
            lo: vec![0.0; cfg.echelons.len()],
            hi: cfg.echelons.iter().map(|e| e.max_order).collect(),
        };
        let mut env = Self {
            layout: ActionLayout::new(vec![slice]),
            stages: Vec::new(),
            t: 0,
            demand_rng: rng::substream(0, stream::DEMAND),
            cfg,
        };
        env.reset(0);
        Ok(env)
    }

    pub fn config(&self) -> &SerialChainConfig {
        &self.cfg
    }

    pub fn stages(&self) -> &[EchelonState] {
        &self.stages
    }

    pub fn stages_mut(&mut self) -> &mut [EchelonState] {
        &mut self.stages
    }

    /// Total units on hand plus in transit across the chain.
    pub fn system_stock(&self) -> f64 {
        self.stages.iter().map(|s| s.on_hand + s.pipeline.iter().sum::<f64>()).sum()
    }

    /// Echelon-local inventory position (net inventory plus pipeline).
    pub fn inventory_position(features: &[f64], cfg: &SerialChainConfig, echelon: usize) -> f64 {
        let mut offset = 0;
        for e in &cfg.echelons[..echelon] {
            offset += 2 + e.lead_time;
        }
        let l = cfg.echelons[echelon].lead_time;
        features[offset] + features[offset + 1..offset + 1 + l].iter().sum::<f64>()
    }

    pub fn observe(&self) -> EnvObservation {
        let mut features = Vec::new();
        for s in &self.stages {
            features.push(s.on_hand - s.backlog);
            features.extend(s.pipeline.iter().copied());
            features.push(s.last_downstream_order);
        }
        EnvObservation { features, t: self.t }
    }

    /// One period with given orders (within bounds) and customer demand.
    ///
    /// Stages are processed upstream first so a zero lead time delivers
    /// within the same period.
    pub fn transition(&mut self, orders: &[f64], demand: f64) -> StepResult {
        let m_count = self.stages.len();
        let mut info = Info::new();
        let mut inbound = orders[m_count - 1];
        info.insert("source_shipment".into(), inbound);
        let mut shipped = vec![0.0; m_count];
        for m in (0..m_count).rev() {
            let s = &mut self.stages[m];
            let arrival = if s.pipeline.is_empty() {
                inbound
            } else {
                s.pipeline.push_back(inbound);
                s.pipeline.pop_front().unwrap_or(0.0)
            };
            let available = s.on_hand + arrival;
            let incoming = if m == 0 { demand } else { orders[m - 1] };
            let requested = incoming + s.backlog;
            let ship = requested.min(available);
            s.backlog = requested - ship;
            s.on_hand = available - ship;
            s.last_downstream_order = incoming;
            shipped[m] = ship;
            inbound = ship;
        }
        self.t += 1;

        let mut reward = 0.0;
        for (m, (s, e)) in self.stages.iter().zip(&self.cfg.echelons).enumerate() {
            let revenue = if m == 0 { self.cfg.price * shipped[0] } else { self.cfg.echelons[m - 1].order_cost * shipped[m] };
            let shortage = if m == 0 { self.cfg.shortage_cost * s.backlog } else { 0.0 };
            let profit = revenue - e.holding_cost * s.on_hand - e.order_cost * orders[m] - shortage;
            info.insert(format!("profit_{m}"), profit);
            info.insert(format!("on_hand_{m}"), s.on_hand);
            info.insert(format!("backlog_{m}"), s.backlog);
            info.insert(format!("shipped_{m}"), shipped[m]);
            reward += profit;
        }
        info.insert("demand".into(), demand);
        info.insert("sales".into(), shipped[0]);
        StepResult { obs: self.observe(), reward, done: self.t >= self.cfg.horizon, info }
    }
}

impl Environment for SerialChainEnv {
    fn reset(&mut self, seed: u64) -> EnvObservation {
        self.demand_rng = rng::substream(seed, stream::DEMAND);
        self.t = 0;
        self.stages = self
            .cfg
            .echelons
            .iter()
            .map(|e| EchelonState {
                on_hand: e.initial_inventory,
                backlog: 0.0,
                pipeline: VecDeque::from(vec![0.0; e.lead_time]),
                last_downstream_order: 0.0,
            })
            .collect();
        self.observe()
    }

    fn step(&mut self, action: &EnvAction) -> Result<StepResult> {
        if self.t >= self.cfg.horizon {
            return Err(Error::EpisodeFinished);
        }
        let (applied, clamped) = self.layout.clamp(action)?;
        let demand = self.cfg.demand.sample(&mut self.demand_rng);
        let mut res = self.transition(&applied.components, demand);
        res.info.insert("clamped".into(), clamped as f64);
        Ok(res)
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

/// One echelon of a serial chain acting for its own profit while every
/// other echelon follows a fixed base-stock rule. Echelons beyond `actor`
/// are scripted, so this covers the non-cooperative objective for a fixed
/// opponent profile.
pub struct SerialSingleActor {
    inner: SerialChainEnv,
    actor: usize,
    levels: Vec<f64>,
    layout: ActionLayout,
    last_obs: EnvObservation,
}

impl SerialSingleActor {
    pub fn new(inner: SerialChainEnv, actor: usize, levels: Vec<f64>) -> Result<Self> {
        let m = inner.config().echelons.len();
        if actor >= m || levels.len() != m {
            return Err(invalid("actor index or base-stock level count out of range"));
        }
        let hi = inner.config().echelons[actor].max_order;
        let layout = ActionLayout::new(vec![ActionSlice::uniform("order", SliceKind::Integer, 1, 0.0, hi)]);
        let last_obs = inner.observe();
        Ok(Self { inner, actor, levels, layout, last_obs })
    }
}

impl Environment for SerialSingleActor {
    fn reset(&mut self, seed: u64) -> EnvObservation {
        self.last_obs = self.inner.reset(seed);
        self.last_obs.clone()
    }

    fn step(&mut self, action: &EnvAction) -> Result<StepResult> {
        let (own, _) = self.layout.clamp(action)?;
        let cfg = self.inner.config().clone();
        let orders: Vec<f64> = (0..cfg.echelons.len())
            .map(|m| {
                if m == self.actor {
                    own.components[0]
                } else {
                    let ip = SerialChainEnv::inventory_position(&self.last_obs.features, &cfg, m);
                    (self.levels[m] - ip).max(0.0).min(cfg.echelons[m].max_order)
                }
            })
            .collect();
        let mut res = self.inner.step(&EnvAction::new(orders))?;
        res.reward = res.info[&format!("profit_{}", self.actor)];
        self.last_obs = res.obs.clone();
        Ok(res)
    }

    fn horizon(&self) -> usize {
        self.inner.horizon()
    }

    fn action_layout(&self) -> &ActionLayout {
        &self.layout
    }

    fn observation_layout(&self) -> ObservationLayout {
        self.inner.observation_layout()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(mode: ShortageMode, lead_time: usize) -> SingleEchelonConfig {
        SingleEchelonConfig {
            horizon: 10,
            lead_time,
            demand: DemandDist::Constant { value: 0 },
            holding_cost: 0.5,
            shortage_cost: 1.5,
            order_cost: 2.0,
            price: 5.0,
            mode,
            max_order: 20.0,
            initial_inventory: 5.0,
        }
    }

    #[test]
    fn stockout_lost_sales() {
        let mut env = SingleEchelonEnv::new(cfg(ShortageMode::LostSales, 0)).unwrap();
        let r = env.transition(3.0, 10.0);
        assert_eq!((r.info("sales"), r.info("lost"), r.info("on_hand")), (8.0, 2.0, 0.0));
        assert_eq!(r.reward, 5.0 * 8.0 - 1.5 * 2.0 - 2.0 * 3.0);
    }

    #[test]
    fn backlog_served_next_period() {
        let mut env = SingleEchelonEnv::new(cfg(ShortageMode::Backlog, 0)).unwrap();
        let r = env.transition(3.0, 10.0);
        assert_eq!((r.info("sales"), r.info("backlog")), (8.0, 2.0));
        let r = env.transition(10.0, 4.0);
        assert_eq!((r.info("sales"), r.info("on_hand"), r.info("backlog")), (6.0, 4.0, 0.0));
    }

    #[test]
    fn layout_lengths() {
        assert_eq!(cfg(ShortageMode::LostSales, 2).observation_layout().len(), 3);
        assert_eq!(cfg(ShortageMode::Backlog, 0).observation_layout().len(), 2);
        let serial = SerialChainConfig {
            horizon: 5,
            echelons: vec![
                EchelonParams { lead_time: 1, holding_cost: 1.0, order_cost: 1.0, max_order: 10.0, initial_inventory: 0.0 };
                2
            ],
            demand: DemandDist::Constant { value: 0 },
            shortage_cost: 1.0,
            price: 2.0,
        };
        assert_eq!(serial.observation_layout().len(), 6);
    }

    #[test]
    fn zero_demand_order_arrives_after_lead_time() {
        let mut env = SingleEchelonEnv::new(cfg(ShortageMode::LostSales, 2)).unwrap();
        env.reset(1);
        let on_hand = |e: &SingleEchelonEnv| e.state().on_hand;
        env.step(&EnvAction::new(vec![4.0])).unwrap();
        assert_eq!(on_hand(&env), 5.0);
        env.step(&EnvAction::new(vec![0.0])).unwrap();
        assert_eq!(on_hand(&env), 5.0);
        env.step(&EnvAction::new(vec![0.0])).unwrap();
        assert_eq!(on_hand(&env), 9.0);
    }

    #[test]
    fn inventory_position_from_observation() {
        let c = cfg(ShortageMode::Backlog, 2);
        assert_eq!(c.inventory_position(&[3.0, 1.0, 2.0, 4.0]), 2.0);
    }
}
