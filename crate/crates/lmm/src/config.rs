//! Experiment configuration files.
//!
//! One TOML document per experiment:
//!
//! ```toml
//! [experiment]
//! name = "pricing-grid"
//! seeds = { start = 0, count = 20 }
//! train_steps = 300000
//!
//! [env.pricing]
//! # every field of the environment config
//!
//! [ppo]
//! lr = 1e-3
//! ```
//!
//! Exactly one `[env.*]` table must be present. Unknown keys anywhere are
//! rejected.

use std::path::{Path, PathBuf};

use lmm_core::baselines::PolicySpec;
use lmm_core::collab::{CollabConfig, CollabEnv};
use lmm_core::dt::DtConfig;
use lmm_core::inventory::{SerialChainConfig, SerialChainEnv, SingleEchelonConfig, SingleEchelonEnv};
use lmm_core::ppo::PpoConfig;
use lmm_core::pricing::{PricingConfig, PricingEnv};
use lmm_core::recsys::{RecsysConfig, RecsysEnv};
use lmm_core::Environment;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// Evaluation seeds, either listed or as a contiguous range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeedSet {
    List(Vec<u64>),
    Range { start: u64, count: u64 },
}

impl SeedSet {
    pub fn seeds(&self) -> Vec<u64> {
        match self {
            SeedSet::List(v) => v.clone(),
            SeedSet::Range { start, count } => (*start..start + count).collect(),
        }
    }
}

impl Default for SeedSet {
    fn default() -> Self {
        SeedSet::Range { start: 0, count: 20 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub name: String,
    pub seeds: SeedSet,
    /// Environment steps per PPO training run.
    pub train_steps: usize,
    /// Replaces the environment's horizon when set.
    pub horizon: Option<usize>,
    /// Fixed ordering cost used by pricing scenarios c and d.
    pub fixed_cost: f64,
    /// Default output directory; not part of the config hash.
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            seeds: SeedSet::default(),
            train_steps: 100_000,
            horizon: None,
            fixed_cost: 10.0,
            out: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSection {
    pub inventory: Option<SingleEchelonConfig>,
    pub serial: Option<SerialChainConfig>,
    pub pricing: Option<PricingConfig>,
    pub recsys: Option<RecsysConfig>,
    pub collab: Option<CollabConfig>,
}

/// The one environment a config describes.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum EnvConfig {
    Inventory(SingleEchelonConfig),
    Serial(SerialChainConfig),
    Pricing(PricingConfig),
    Recsys(RecsysConfig),
    Collab(CollabConfig),
}

impl EnvConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            EnvConfig::Inventory(_) => "inventory",
            EnvConfig::Serial(_) => "serial",
            EnvConfig::Pricing(_) => "pricing",
            EnvConfig::Recsys(_) => "recsys",
            EnvConfig::Collab(_) => "collab",
        }
    }

    pub fn set_horizon(&mut self, h: usize) {
        match self {
            EnvConfig::Inventory(c) => c.horizon = h,
            EnvConfig::Serial(c) => c.horizon = h,
            EnvConfig::Pricing(c) => c.horizon = h,
            EnvConfig::Recsys(c) => c.horizon = h,
            EnvConfig::Collab(c) => c.horizon = h,
        }
    }

    pub fn build(&self) -> CliResult<Box<dyn Environment>> {
        let env: Box<dyn Environment> = match self {
            EnvConfig::Inventory(c) => Box::new(SingleEchelonEnv::new(c.clone())?),
            EnvConfig::Serial(c) => Box::new(SerialChainEnv::new(c.clone())?),
            EnvConfig::Pricing(c) => Box::new(PricingEnv::new(c.clone())?),
            EnvConfig::Recsys(c) => Box::new(RecsysEnv::new(c.clone())?),
            EnvConfig::Collab(c) => Box::new(CollabEnv::new(c.clone())?),
        };
        Ok(env)
    }

    /// Hash of the environment section alone, stored in trajectory files and
    /// checkpoints.
    pub fn hash(&self) -> String {
        canonical_hash(self)
    }
}

/// Grids for heuristic tuning.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneSection {
    pub n_eval: usize,
    pub seed: u64,
    /// Base-stock levels for inventory and pricing heuristics.
    pub levels: Vec<f64>,
    /// Candidate list prices for BSLP.
    pub list_prices: Vec<f64>,
    /// Price grid searched by the one-period profit maximizers.
    pub price_grid: Vec<f64>,
    /// Demand cover, in periods, for the collaborative heuristic.
    pub covers: Vec<f64>,
    /// Fixed prices for the collaborative heuristic.
    pub collab_prices: Vec<f64>,
}

impl Default for TuneSection {
    fn default() -> Self {
        Self {
            n_eval: 30,
            seed: 5000,
            levels: (0..=30).map(|k| 2.5 * k as f64).collect(),
            list_prices: (4..=16).map(f64::from).collect(),
            price_grid: lmm_core::baselines::linspace(4.0, 16.0, 25),
            covers: (2..=16).map(|k| 0.25 * k as f64).collect(),
            collab_prices: (4..=16).map(|k| 0.5 * k as f64).collect(),
        }
    }
}

/// Offline dataset mixture for the collaborative experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollectSection {
    pub ppo_episodes: usize,
    pub heuristic_episodes: usize,
    pub random_episodes: usize,
    pub seed: u64,
    /// Condition the transformer on the best return in the dataset instead
    /// of `dt.target_return`.
    pub target_from_dataset: bool,
}

impl Default for CollectSection {
    fn default() -> Self {
        Self { ppo_episodes: 100, heuristic_episodes: 50, random_episodes: 50, seed: 10_000, target_from_dataset: true }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    #[serde(default)]
    pub experiment: ExperimentSection,
    pub env: EnvSection,
    #[serde(default)]
    pub ppo: PpoConfig,
    #[serde(default)]
    pub dt: DtConfig,
    #[serde(default)]
    pub tune: TuneSection,
    #[serde(default)]
    pub collect: CollectSection,
    /// Heuristic used by `simulate` and `collect`, as written by `tune`.
    pub policy: Option<PolicySpec>,
}

/// A validated experiment description.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub env: EnvConfig,
    pub ppo: PpoConfig,
    pub dt: DtConfig,
    pub tune: TuneSection,
    pub collect: CollectSection,
    pub policy: Option<PolicySpec>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        Self::from_raw(raw)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn from_raw(raw: RawConfig) -> CliResult<Self> {
        let EnvSection { inventory, serial, pricing, recsys, collab } = raw.env;
        let mut envs: Vec<EnvConfig> = Vec::new();
        envs.extend(inventory.map(EnvConfig::Inventory));
        envs.extend(serial.map(EnvConfig::Serial));
        envs.extend(pricing.map(EnvConfig::Pricing));
        envs.extend(recsys.map(EnvConfig::Recsys));
        envs.extend(collab.map(EnvConfig::Collab));
        if envs.len() != 1 {
            return Err(CliError::Config(format!("expected exactly one [env.*] section, found {}", envs.len())));
        }
        let mut env = envs.pop().unwrap();
        if let Some(h) = raw.experiment.horizon {
            env.set_horizon(h);
        }
        let cfg = Self {
            experiment: raw.experiment,
            env,
            ppo: raw.ppo,
            dt: raw.dt,
            tune: raw.tune,
            collect: raw.collect,
            policy: raw.policy,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |e: lmm_core::Error| CliError::Config(e.to_string());
        self.env.build().map_err(|e| match e {
            CliError::Core(c) => bad(c),
            other => other,
        })?;
        self.ppo.validate().map_err(bad)?;
        self.dt.validate().map_err(bad)?;
        if self.experiment.seeds.seeds().is_empty() {
            return Err(CliError::Config("seed set is empty".into()));
        }
        if self.experiment.fixed_cost < 0.0 {
            return Err(CliError::Config("fixed_cost must be non-negative".into()));
        }
        if let Some(p) = &self.policy {
            p.validate().map_err(bad)?;
        }
        if self.tune.n_eval == 0 {
            return Err(CliError::Config("tune.n_eval must be positive".into()));
        }
        Ok(())
    }

    pub fn seeds(&self) -> Vec<u64> {
        self.experiment.seeds.seeds()
    }

    /// Sets the training seeds of PPO and the decision transformer.
    pub fn set_seed(&mut self, seed: u64) {
        self.ppo.seed = seed;
        self.dt.seed = seed;
    }

    pub fn hash(&self) -> String {
        canonical_hash(self)
    }
}

/// SHA-256 over JSON with sorted object keys.
pub fn canonical_hash<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("config serializes to JSON");
    let text = serde_json::to_string(&v).expect("JSON value serializes");
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MIN: &str = r#"
[env.inventory]
horizon = 5
lead_time = 0
holding_cost = 0.5
shortage_cost = 1.0
order_cost = 2.0
price = 5.0
max_order = 10.0
"#;

    #[test]
    fn minimal_config_parses() {
        let cfg = ExperimentConfig::from_toml(MIN).unwrap();
        assert_eq!(cfg.env.kind(), "inventory");
        assert_eq!(cfg.seeds().len(), 20);
    }

    #[test]
    fn unknown_key_rejected() {
        let text = format!("{MIN}\nbogus = 1\n");
        assert!(matches!(ExperimentConfig::from_toml(&text), Err(CliError::Config(_))));
        let text = format!("[experiment]\nnmae = \"x\"\n{MIN}");
        assert!(matches!(ExperimentConfig::from_toml(&text), Err(CliError::Config(_))));
    }

    #[test]
    fn needs_exactly_one_env() {
        assert!(ExperimentConfig::from_toml("[experiment]\nname = \"x\"\n").is_err());
    }

    #[test]
    fn horizon_override_and_hash() {
        let a = ExperimentConfig::from_toml(MIN).unwrap();
        let b = ExperimentConfig::from_toml(&format!("[experiment]\nhorizon = 7\n{MIN}")).unwrap();
        match &b.env {
            EnvConfig::Inventory(c) => assert_eq!(c.horizon, 7),
            _ => unreachable!(),
        }
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash(), ExperimentConfig::from_toml(MIN).unwrap().hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn seed_list_form() {
        let cfg = ExperimentConfig::from_toml(&format!("[experiment]\nseeds = [3, 1]\n{MIN}")).unwrap();
        assert_eq!(cfg.seeds(), vec![3, 1]);
    }

    #[test]
    fn invalid_env_is_config_error() {
        let text = MIN.replace("max_order = 10.0", "max_order = -1.0");
        assert!(matches!(ExperimentConfig::from_toml(&text), Err(CliError::Config(_))));
    }
}
