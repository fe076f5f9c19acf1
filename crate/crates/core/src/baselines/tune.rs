use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::heuristics::{BaseStock, CollabBaseStock, ConstantOrder, PricingHeuristic, PricingRule, SsPolicy};
use crate::collab::CollabConfig;
use crate::error::{Error, Result};
use crate::inventory::SingleEchelonConfig;
use crate::pricing::PricingConfig;
use crate::sim::{evaluate, EnvAction, Environment, EvalStats, Policy};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyFamily {
    BaseStock,
    Ss,
    Constant,
    Bslp,
    Ssp,
    Myopic,
    CollabBaseStock,
}

impl PolicyFamily {
    pub fn name(self) -> &'static str {
        match self {
            PolicyFamily::BaseStock => "base_stock",
            PolicyFamily::Ss => "ss",
            PolicyFamily::Constant => "constant",
            PolicyFamily::Bslp => "bslp",
            PolicyFamily::Ssp => "ssp",
            PolicyFamily::Myopic => "myopic",
            PolicyFamily::CollabBaseStock => "collab_base_stock",
        }
    }
}

/// A heuristic family with concrete parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicySpec {
    BaseStock { level: f64 },
    Ss { s: f64, level: f64 },
    Constant { quantity: f64 },
    Bslp { base_stock: f64, list_price: f64 },
    Ssp { s: f64, level: f64 },
    Myopic { level: f64 },
    CollabBaseStock { cover: f64, price: f64 },
}

impl PolicySpec {
    pub fn family(&self) -> PolicyFamily {
        match self {
            PolicySpec::BaseStock { .. } => PolicyFamily::BaseStock,
            PolicySpec::Ss { .. } => PolicyFamily::Ss,
            PolicySpec::Constant { .. } => PolicyFamily::Constant,
            PolicySpec::Bslp { .. } => PolicyFamily::Bslp,
            PolicySpec::Ssp { .. } => PolicyFamily::Ssp,
            PolicySpec::Myopic { .. } => PolicyFamily::Myopic,
            PolicySpec::CollabBaseStock { .. } => PolicyFamily::CollabBaseStock,
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match *self {
            PolicySpec::BaseStock { level } | PolicySpec::Myopic { level } => vec![level],
            PolicySpec::Constant { quantity } => vec![quantity],
            PolicySpec::Ss { s, level } | PolicySpec::Ssp { s, level } => vec![s, level],
            PolicySpec::Bslp { base_stock, list_price } => vec![base_stock, list_price],
            PolicySpec::CollabBaseStock { cover, price } => vec![cover, price],
        }
    }

    pub fn from_params(family: PolicyFamily, p: &[f64]) -> Result<Self> {
        let need = match family {
            PolicyFamily::BaseStock | PolicyFamily::Myopic | PolicyFamily::Constant => 1,
            _ => 2,
        };
        if p.len() != need {
            return Err(Error::InvalidConfig(alloc::format!("{} takes {need} parameters", family.name())));
        }
        let spec = match family {
            PolicyFamily::BaseStock => PolicySpec::BaseStock { level: p[0] },
            PolicyFamily::Myopic => PolicySpec::Myopic { level: p[0] },
            PolicyFamily::Constant => PolicySpec::Constant { quantity: p[0] },
            PolicyFamily::Ss => PolicySpec::Ss { s: p[0], level: p[1] },
            PolicyFamily::Ssp => PolicySpec::Ssp { s: p[0], level: p[1] },
            PolicyFamily::Bslp => PolicySpec::Bslp { base_stock: p[0], list_price: p[1] },
            PolicyFamily::CollabBaseStock => PolicySpec::CollabBaseStock { cover: p[0], price: p[1] },
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            PolicySpec::Ss { s, level } | PolicySpec::Ssp { s, level } if !(s < level) => {
                Err(Error::InvalidConfig("(s, S) policies need s < S".into()))
            }
            _ => Ok(()),
        }
    }

    /// Cartesian product of per-parameter grids, dropping invalid `(s, S)` pairs.
    pub fn grid(family: PolicyFamily, grids: &[Vec<f64>]) -> Result<Vec<Self>> {
        if grids.is_empty() || grids.iter().any(Vec::is_empty) {
            return Err(Error::EmptyGrid);
        }
        let mut combos: Vec<Vec<f64>> = vec![Vec::new()];
        for g in grids {
            combos = combos
                .into_iter()
                .flat_map(|c| {
                    g.iter().map(move |&v| {
                        let mut next = c.clone();
                        next.push(v);
                        next
                    })
                })
                .collect();
        }
        let specs: Vec<Self> = combos.iter().filter_map(|c| Self::from_params(family, c).ok()).collect();
        if specs.is_empty() {
            return Err(Error::EmptyGrid);
        }
        Ok(specs)
    }

    pub fn single_echelon_policy(&self, cfg: &SingleEchelonConfig) -> Option<Box<dyn Policy>> {
        let cfg = cfg.clone();
        match *self {
            PolicySpec::BaseStock { level } => Some(Box::new(BaseStock { level, cfg })),
            PolicySpec::Ss { s, level } => Some(Box::new(SsPolicy { s, level, cfg })),
            PolicySpec::Constant { quantity } => Some(Box::new(ConstantOrder { action: EnvAction::new(vec![quantity]) })),
            _ => None,
        }
    }

    pub fn collab_policy(&self, cfg: &CollabConfig) -> Option<CollabBaseStock> {
        match *self {
            PolicySpec::CollabBaseStock { cover, price } => Some(CollabBaseStock { cover, price, cfg: cfg.clone() }),
            _ => None,
        }
    }

    pub fn pricing_policy(&self, cfg: &PricingConfig, grid: &[f64]) -> Option<PricingHeuristic> {
        let rule = match *self {
            PolicySpec::Bslp { base_stock, list_price } => PricingRule::Bslp { base_stock, list_price },
            PolicySpec::Ssp { s, level } => PricingRule::Ssp { s, level },
            PolicySpec::Myopic { level } => PricingRule::Myopic { level },
            _ => return None,
        };
        Some(PricingHeuristic::new(rule, cfg.clone(), grid.to_vec()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TuneResult {
    pub best: PolicySpec,
    pub stats: EvalStats,
    /// Mean return of every candidate, in evaluation order.
    pub table: Vec<(PolicySpec, f64)>,
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.partial_cmp(y) {
            Some(Ordering::Equal) | None => continue,
            Some(o) => return o,
        }
    }
    a.len().cmp(&b.len())
}

/// Evaluates every candidate on the same seeds (common random numbers) and
/// returns the best mean; ties go to the lexicographically smallest params.
pub fn grid_tune<E, F, P>(
    mut candidates: Vec<PolicySpec>,
    env: &mut E,
    mut build: F,
    n_eval: usize,
    seed: u64,
) -> Result<TuneResult>
where
    E: Environment + ?Sized,
    F: FnMut(&PolicySpec) -> P,
    P: Policy,
{
    if candidates.is_empty() {
        return Err(Error::EmptyGrid);
    }
    candidates.sort_by(|a, b| lex_cmp(&a.params(), &b.params()));
    let mut best: Option<(PolicySpec, EvalStats)> = None;
    let mut table = Vec::with_capacity(candidates.len());
    for spec in candidates {
        let mut policy = build(&spec);
        let stats = evaluate(env, &mut policy, n_eval, seed)?;
        table.push((spec.clone(), stats.mean));
        let better = match &best {
            None => true,
            Some((_, b)) => stats.mean > b.mean,
        };
        if better {
            best = Some((spec, stats));
        }
    }
    let (best, stats) = best.expect("nonempty candidates");
    Ok(TuneResult { best, stats, table })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_skips_invalid_pairs() {
        let g = PolicySpec::grid(PolicyFamily::Ss, &[vec![1.0, 5.0], vec![3.0, 6.0]]).unwrap();
        assert_eq!(g.len(), 3);
        assert_eq!(PolicySpec::grid(PolicyFamily::BaseStock, &[vec![]]), Err(Error::EmptyGrid));
        assert_eq!(PolicySpec::grid(PolicyFamily::Ss, &[vec![5.0], vec![3.0]]), Err(Error::EmptyGrid));
    }
}
