//! Joint dynamic pricing and replenishment against a competitor.
//!
//! Demand is Poisson with a logistic rate in the regressors
//! `x(p, o, r) = (1, p, o, r, p - o, p - r)` of our price `p`, the
//! competitor price `o` and the customers' reference price `r`.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::{self, stream, StreamRng};
use crate::sim::{
    ActionLayout, ActionSlice, EnvAction, EnvObservation, Environment, Info, ObservationLayout, SliceKind,
    StepResult,
};

/// Numerically stable logistic function.
pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn regressors(price: f64, competitor: f64, reference: f64) -> [f64; 6] {
    [1.0, price, competitor, reference, price - competitor, price - reference]
}

/// Poisson rate `eta * delta * logistic(x(p, o, r) . beta)`.
pub fn demand_rate(price: f64, competitor: f64, reference: f64, beta: &[f64; 6], eta: f64, delta: f64) -> f64 {
    let x = regressors(price, competitor, reference);
    let z: f64 = x.iter().zip(beta).map(|(a, b)| a * b).sum();
    eta * delta * logistic(z)
}

pub fn sample_demand(rate: f64, rng: &mut StreamRng) -> u64 {
    rng::poisson(rng, rate)
}

pub fn reference_price_update(reference: f64, price: f64, smoothing: f64) -> f64 {
    smoothing * reference + (1.0 - smoothing) * price
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CompetitorProcess {
    Constant { price: f64 },
    /// `mean + amplitude * cos(2 pi t / period)`.
    Cyclic { mean: f64, amplitude: f64, period: f64 },
    /// `o' = mean + rho (o - mean) + sigma * eps`, starting from `initial`.
    Ar1 { mean: f64, rho: f64, sigma: f64, initial: f64 },
}

impl CompetitorProcess {
    pub fn initial(&self) -> f64 {
        match *self {
            CompetitorProcess::Constant { price } => price,
            CompetitorProcess::Cyclic { .. } => self.cyclic_at(0),
            CompetitorProcess::Ar1 { initial, .. } => initial,
        }
    }

    fn cyclic_at(&self, t: usize) -> f64 {
        match *self {
            CompetitorProcess::Cyclic { mean, amplitude, period } => {
                mean + amplitude * (2.0 * core::f64::consts::PI * t as f64 / period).cos()
            }
            _ => unreachable!(),
        }
    }

    /// Competitor price for period `t` given the price in period `t - 1`.
    pub fn next(&self, t: usize, previous: f64, rng: &mut StreamRng) -> f64 {
        match *self {
            CompetitorProcess::Constant { price } => price,
            CompetitorProcess::Cyclic { .. } => self.cyclic_at(t),
            CompetitorProcess::Ar1 { mean, rho, sigma, .. } => {
                mean + rho * (previous - mean) + rng::normal(rng, 0.0, sigma)
            }
        }
    }
}

/// Competitor price path `o_0, ..., o_{t}`, returning `o_t`.
pub fn competitor_price(t: usize, process: &CompetitorProcess, rng: &mut StreamRng) -> f64 {
    let mut o = process.initial();
    for k in 1..=t {
        o = process.next(k, o, rng);
    }
    o
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PricingMode {
    #[default]
    Backlog,
    Lost,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Backlog, no fixed ordering cost.
    A,
    /// Lost demand, no fixed ordering cost.
    B,
    /// Backlog with fixed ordering cost.
    C,
    /// Lost demand with fixed ordering cost.
    D,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [Scenario::A, Scenario::B, Scenario::C, Scenario::D];

    pub fn label(self) -> &'static str {
        match self {
            Scenario::A => "a",
            Scenario::B => "b",
            Scenario::C => "c",
            Scenario::D => "d",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "a" => Some(Scenario::A),
            "b" => Some(Scenario::B),
            "c" => Some(Scenario::C),
            "d" => Some(Scenario::D),
            _ => None,
        }
    }

    pub fn mode(self) -> PricingMode {
        match self {
            Scenario::A | Scenario::C => PricingMode::Backlog,
            Scenario::B | Scenario::D => PricingMode::Lost,
        }
    }

    pub fn has_fixed_cost(self) -> bool {
        matches!(self, Scenario::C | Scenario::D)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PricingConfig {
    pub horizon: usize,
    pub lead_time: usize,
    pub eta: f64,
    pub delta: f64,
    pub beta: [f64; 6],
    pub holding_cost: f64,
    /// Backlog cost per unit in backlog mode, lost-sale penalty otherwise.
    pub shortage_cost: f64,
    pub order_cost: f64,
    #[serde(default)]
    pub fixed_cost: f64,
    pub price_min: f64,
    pub price_max: f64,
    pub max_order: f64,
    #[serde(default)]
    pub mode: PricingMode,
    pub competitor: CompetitorProcess,
    pub ref_smoothing: f64,
    pub ref_initial: f64,
    /// Carry unmet backlog into next period's serviceable demand. `false`
    /// reproduces the literal per-period equations.
    #[serde(default = "default_true")]
    pub carryover: bool,
    #[serde(default)]
    pub initial_inventory: f64,
}

fn default_true() -> bool {
    true
}

impl Default for PricingConfig {
    /// Desk-scale preset. Parameter values are invented for this artifact.
    fn default() -> Self {
        Self {
            horizon: 30,
            lead_time: 1,
            eta: 30.0,
            delta: 1.0,
            beta: [1.0, -0.5, 0.25, 0.15, -0.15, -0.25],
            holding_cost: 0.5,
            shortage_cost: 2.0,
            order_cost: 3.0,
            fixed_cost: 0.0,
            price_min: 4.0,
            price_max: 16.0,
            max_order: 30.0,
            mode: PricingMode::Backlog,
            competitor: CompetitorProcess::Cyclic { mean: 10.0, amplitude: 2.0, period: 10.0 },
            ref_smoothing: 0.7,
            ref_initial: 10.0,
            carryover: true,
            initial_inventory: 10.0,
        }
    }
}

impl PricingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            return Err(invalid("horizon must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.delta) {
            return Err(invalid("delta must lie in [0, 1]"));
        }
        if !(self.eta > 0.0) {
            return Err(invalid("eta must be positive"));
        }
        if !(self.price_min < self.price_max) {
            return Err(invalid("price_min must be below price_max"));
        }
        if !(0.0..1.0).contains(&self.ref_smoothing) {
            return Err(invalid("ref_smoothing must lie in [0, 1)"));
        }
        let costs = [self.holding_cost, self.shortage_cost, self.order_cost, self.fixed_cost];
        if costs.iter().any(|c| !(*c >= 0.0)) || !(self.max_order > 0.0) {
            return Err(invalid("costs must be non-negative and max_order positive"));
        }
        if self.beta.iter().any(|b| !b.is_finite()) {
            return Err(invalid("beta must be finite"));
        }
        Ok(())
    }

    /// The same configuration with the mode and fixed cost of a scenario.
    pub fn with_scenario(&self, scenario: Scenario, fixed_cost: f64) -> Self {
        let mut cfg = self.clone();
        cfg.mode = scenario.mode();
        cfg.fixed_cost = if scenario.has_fixed_cost() { fixed_cost } else { 0.0 };
        cfg
    }

    pub fn rate(&self, price: f64, competitor: f64, reference: f64) -> f64 {
        demand_rate(price, competitor, reference, &self.beta, self.eta, self.delta)
    }

    fn carries_backlog(&self) -> bool {
        self.mode == PricingMode::Backlog && self.carryover
    }

    /// `(I_{t-1}, B_{t-1}, d_{t-1}, q_{t-L}..q_{t-1}, o_t, r_t)`.
    pub fn observation_layout(&self) -> ObservationLayout {
        let mut layout = ObservationLayout::default();
        layout.push("on_hand");
        layout.push("backlog");
        layout.push("last_demand");
        for k in (1..=self.lead_time).rev() {
            layout.push(format!("pipeline_t-{k}"));
        }
        layout.push("competitor_price");
        layout.push("reference_price");
        layout
    }

    /// Reads the decision-relevant quantities back out of an observation.
    pub fn view(&self, features: &[f64]) -> PricingView {
        let l = self.lead_time;
        let pipeline = &features[3..3 + l];
        let owed = if self.carries_backlog() { features[1] } else { 0.0 };
        PricingView {
            on_hand: features[0],
            owed,
            in_transit: pipeline.iter().sum(),
            next_arrival: pipeline.first().copied(),
            competitor: features[3 + l],
            reference: features[4 + l],
        }
    }
}

/// Decision-relevant summary of a pricing observation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PricingView {
    pub on_hand: f64,
    /// Backlog that will be served from this period's stock.
    pub owed: f64,
    pub in_transit: f64,
    /// Arrival this period; `None` with zero lead time (the new order arrives).
    pub next_arrival: Option<f64>,
    pub competitor: f64,
    pub reference: f64,
}

impl PricingView {
    pub fn inventory_position(&self) -> f64 {
        self.on_hand + self.in_transit - self.owed
    }

    /// Stock available to serve demand this period if `order` is placed now.
    pub fn available(&self, order: f64) -> f64 {
        self.on_hand + self.next_arrival.unwrap_or(order)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PricingState {
    pub on_hand: f64,
    pub backlog: f64,
    pub last_demand: f64,
    pub pipeline: VecDeque<f64>,
    pub competitor: f64,
    pub reference: f64,
    pub t: usize,
}

pub struct PricingEnv {
    cfg: PricingConfig,
    layout: ActionLayout,
    state: PricingState,
    demand_rng: StreamRng,
    competitor_rng: StreamRng,
}

impl PricingEnv {
    pub fn new(cfg: PricingConfig) -> Result<Self> {
        cfg.validate()?;
        let layout = ActionLayout::new(vec![
            ActionSlice::uniform("price", SliceKind::Continuous, 1, cfg.price_min, cfg.price_max),
            ActionSlice::uniform("order", SliceKind::Integer, 1, 0.0, cfg.max_order),
        ]);
        let mut env = Self {
            state: Self::initial_state(&cfg),
            demand_rng: rng::substream(0, stream::DEMAND),
            competitor_rng: rng::substream(0, stream::COMPETITOR),
            layout,
            cfg,
        };
        env.reset(0);
        Ok(env)
    }

    fn initial_state(cfg: &PricingConfig) -> PricingState {
        PricingState {
            on_hand: cfg.initial_inventory,
            backlog: 0.0,
            last_demand: 0.0,
            pipeline: VecDeque::from(vec![0.0; cfg.lead_time]),
            competitor: cfg.competitor.initial(),
            reference: cfg.ref_initial,
            t: 0,
        }
    }

    pub fn config(&self) -> &PricingConfig {
        &self.cfg
    }

    pub fn state(&self) -> &PricingState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut PricingState {
        &mut self.state
    }

    pub fn observe(&self) -> EnvObservation {
        let s = &self.state;
        let mut features = vec![s.on_hand, s.backlog, s.last_demand];
        features.extend(s.pipeline.iter().copied());
        features.push(s.competitor);
        features.push(s.reference);
        EnvObservation { features, t: s.t }
    }

    /// Period dynamics for a known demand realization; price and order must
    /// be within bounds. The competitor and reference prices advance using
    /// `next_competitor`.
    pub fn transition(&mut self, price: f64, order: f64, demand: f64, next_competitor: f64) -> StepResult {
        let cfg = &self.cfg;
        let s = &mut self.state;
        let arrival = if cfg.lead_time == 0 {
            order
        } else {
            s.pipeline.push_back(order);
            s.pipeline.pop_front().unwrap_or(0.0)
        };
        let carried = if cfg.carries_backlog() { s.backlog } else { 0.0 };
        let serviceable = demand + carried;
        let available = s.on_hand + arrival;
        let sales = serviceable.min(available);
        let on_hand = (available - sales).max(0.0);
        let backlog = (serviceable - available).max(0.0);

        let revenue = price * sales;
        let holding = cfg.holding_cost * on_hand;
        let shortage = cfg.shortage_cost * backlog;
        let ordering = cfg.order_cost * order;
        let fixed = if order > 0.0 { cfg.fixed_cost } else { 0.0 };
        let reward = revenue - holding - shortage - ordering - fixed;

        s.on_hand = on_hand;
        s.backlog = backlog;
        s.last_demand = demand;
        s.reference = reference_price_update(s.reference, price, cfg.ref_smoothing);
        s.competitor = next_competitor;
        s.t += 1;

        let mut info = Info::new();
        info.insert("demand".into(), demand);
        info.insert("arrival".into(), arrival);
        info.insert("sales".into(), sales);
        info.insert("backlog".into(), backlog);
        info.insert("on_hand".into(), on_hand);
        info.insert("revenue".into(), revenue);
        info.insert("holding_cost".into(), holding);
        info.insert("shortage_cost".into(), shortage);
        info.insert("order_cost".into(), ordering);
        info.insert("fixed_cost".into(), fixed);
        info.insert("price".into(), price);
        let done = s.t >= cfg.horizon;
        StepResult { obs: self.observe(), reward, done, info }
    }
}

impl Environment for PricingEnv {
    fn reset(&mut self, seed: u64) -> EnvObservation {
        self.demand_rng = rng::substream(seed, stream::DEMAND);
        self.competitor_rng = rng::substream(seed, stream::COMPETITOR);
        self.state = Self::initial_state(&self.cfg);
        self.observe()
    }

    fn step(&mut self, action: &EnvAction) -> Result<StepResult> {
        if self.state.t >= self.cfg.horizon {
            return Err(Error::EpisodeFinished);
        }
        let (applied, clamped) = self.layout.clamp(action)?;
        let (price, order) = (applied.components[0], applied.components[1]);
        let rate = self.cfg.rate(price, self.state.competitor, self.state.reference);
        let demand = sample_demand(rate, &mut self.demand_rng) as f64;
        let next_o = self.cfg.competitor.next(self.state.t + 1, self.state.competitor, &mut self.competitor_rng);
        let mut res = self.transition(price, order, demand, next_o);
        res.info.insert("rate".into(), rate);
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
