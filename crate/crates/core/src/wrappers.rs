//! Environment wrappers that replace action slices with scripted random
//! sources, and policies stitched together from slice-level parts.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{invalid, Result};
use crate::rng::{self, stream, StreamRng};
use crate::sim::{ActionLayout, ActionSlice, EnvAction, EnvObservation, Environment, ObservationLayout, Policy, SliceKind, StepResult};

/// Fills one slice each step, ignoring the agent.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RandomFill {
    /// Uniform over the integer (or real) range of each component.
    Uniform,
    /// Softmax of standard normal logits within each simplex group.
    GaussianSoftmax,
}

/// Draws a fill for `slice` from `rng`.
pub fn random_slice(slice: &ActionSlice, fill: RandomFill, rng: &mut StreamRng) -> Vec<f64> {
    match (fill, &slice.kind) {
        (RandomFill::GaussianSoftmax, SliceKind::Simplex { groups }) => {
            let mut out = vec![0.0; slice.len()];
            for g in groups {
                let logits: Vec<f64> = g.iter().map(|_| rng::standard_normal(rng)).collect();
                let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = logits.iter().map(|l| (l - max).exp()).sum();
                for (&k, l) in g.iter().zip(&logits) {
                    out[k] = (l - max).exp() / z;
                }
            }
            out
        }
        (_, SliceKind::Integer) => (0..slice.len())
            .map(|k| rng::uniform_int(rng, slice.lo[k].round() as u64, slice.hi[k].round() as u64) as f64)
            .collect(),
        _ => (0..slice.len()).map(|k| rng::uniform(rng, slice.lo[k], slice.hi[k])).collect(),
    }
}

/// Exposes only the non-overridden slices of `inner`; overridden slices are
/// drawn from their random source every step.
pub struct RandomizedSlices<E> {
    inner: E,
    overrides: Vec<(&'static str, RandomFill)>,
    layout: ActionLayout,
    rng: StreamRng,
}

impl<E: Environment> RandomizedSlices<E> {
    pub fn new(inner: E, overrides: Vec<(&'static str, RandomFill)>) -> Result<Self> {
        for (name, _) in &overrides {
            if inner.action_layout().slice(name).is_none() {
                return Err(invalid(alloc::format!("no action slice named {name}")));
            }
        }
        let slices = inner
            .action_layout()
            .slices
            .iter()
            .filter(|s| !overrides.iter().any(|(n, _)| *n == s.name))
            .cloned()
            .collect();
        Ok(Self { inner, overrides, layout: ActionLayout::new(slices), rng: rng::substream(0, stream::OVERRIDE) })
    }

    pub fn inner(&self) -> &E {
        &self.inner
    }

    /// Full action for the inner environment.
    pub fn expand(&mut self, action: &EnvAction) -> Result<EnvAction> {
        let (own, _) = self.layout.clamp(action)?;
        let mut own = own.components.into_iter();
        let mut out = Vec::with_capacity(self.inner.action_layout().len());
        for s in &self.inner.action_layout().slices {
            match self.overrides.iter().find(|(n, _)| *n == s.name) {
                Some(&(_, fill)) => out.extend(random_slice(s, fill, &mut self.rng)),
                None => out.extend(own.by_ref().take(s.len())),
            }
        }
        Ok(EnvAction::new(out))
    }
}

impl<E: Environment> Environment for RandomizedSlices<E> {
    fn reset(&mut self, seed: u64) -> EnvObservation {
        self.rng = rng::substream(seed, stream::OVERRIDE);
        self.inner.reset(seed)
    }

    fn step(&mut self, action: &EnvAction) -> Result<StepResult> {
        let full = self.expand(action)?;
        self.inner.step(&full)
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

/// Builds a full action from policies that each own some slices of `layout`.
pub struct ComposedPolicy {
    layout: ActionLayout,
    parts: Vec<(Box<dyn Policy>, Vec<&'static str>)>,
}

impl ComposedPolicy {
    /// Every slice of `layout` must be owned by exactly one part; a part's
    /// action lists its slices in layout order.
    pub fn new(layout: ActionLayout, parts: Vec<(Box<dyn Policy>, Vec<&'static str>)>) -> Result<Self> {
        for s in &layout.slices {
            let owners = parts.iter().filter(|(_, names)| names.contains(&s.name)).count();
            if owners != 1 {
                return Err(invalid(alloc::format!("slice {} must have exactly one owner", s.name)));
            }
        }
        Ok(Self { layout, parts })
    }
}

impl Policy for ComposedPolicy {
    fn act(&mut self, obs: &EnvObservation) -> EnvAction {
        let mut pieces: Vec<Option<Vec<f64>>> = vec![None; self.layout.slices.len()];
        for (policy, names) in &mut self.parts {
            let a = policy.act(obs);
            let mut it = a.components.into_iter();
            for (i, s) in self.layout.slices.iter().enumerate() {
                if names.contains(&s.name) {
                    pieces[i] = Some(it.by_ref().take(s.len()).collect());
                }
            }
        }
        EnvAction::new(pieces.into_iter().flatten().flatten().collect())
    }

    fn reset(&mut self, seed: u64) {
        for (p, _) in &mut self.parts {
            p.reset(seed);
        }
    }
}
