//! Classic heuristic policies, a common-random-numbers grid tuner and an
//! exact finite-horizon DP oracle for tiny instances.

pub mod dp;
pub mod heuristics;
pub mod tune;

pub use dp::{dp_solve, DpAction, DpPolicy, DpSolution, TinyMdpSpec};
pub use heuristics::{
    base_stock_act, best_price, CollabBaseStock, expected_period_profit, linspace, ss_act, BaseStock, ConstantOrder, PricingHeuristic,
    PricingRule, SerialBaseStock, SsPolicy,
};
pub use tune::{grid_tune, PolicyFamily, PolicySpec, TuneResult};
