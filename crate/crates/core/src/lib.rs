//! Allocation-only core for simulating and learning inventory, pricing and
//! recommendation decision problems.
//!
//! The crate is `no_std` and needs only `alloc`. Everything here is a pure
//! function of its configuration and seed; IO, configuration files and the
//! command line live in the `lmm` crate.
//!
//! - [`sim`]: environment contract, episodes, trajectories, evaluation, KDE.
//! - [`inventory`], [`pricing`], [`recsys`], [`collab`]: the environments.
//! - [`baselines`]: heuristic policies, grid tuning and an exact DP oracle.
//! - [`autodiff`], [`nn`], [`ppo`]: reverse-mode tensors and the PPO trainer.
//! - [`dt`]: a small return-conditioned causal transformer.
//! - [`checks`]: the oracle suite behind `lmm validate`.
#![no_std]

extern crate alloc;

pub mod autodiff;
pub mod baselines;
pub mod checks;
pub mod collab;
pub mod dt;
pub mod error;
pub mod inventory;
pub mod nn;
pub mod ppo;
pub mod pricing;
pub mod recsys;
pub mod rng;
pub mod sim;
pub mod wrappers;

pub use error::{Error, Result};
pub use sim::{
    evaluate, kde, run_episode, ActionLayout, ActionSlice, EnvAction, EnvObservation, Environment,
    EvalStats, Policy, SliceKind, StepResult, Trajectory,
};
