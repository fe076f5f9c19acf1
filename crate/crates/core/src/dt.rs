//! Return-conditioned causal transformer over `(return-to-go, state, action)`
//! token triples.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, ParamLayout, Tensor, Var};
use crate::error::{invalid, Error, Result};
use crate::nn::{clip_grad_norm, Adam};
use crate::rng::{self, stream, StreamRng};
use crate::sim::{EnvAction, EvalStats, Environment, Record, Trajectory};

const LN_EPS: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DtConfig {
    /// Context length in triples.
    pub context: usize,
    pub embed_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub dropout: f64,
    pub lr: f64,
    /// Return-to-go the rollout starts from.
    pub target_return: f64,
    pub seed: u64,
    /// Returns-to-go are divided by this before embedding.
    pub rtg_scale: f64,
    pub steps: usize,
    pub batch_size: usize,
    /// Size of the timestep embedding table.
    pub max_timestep: usize,
    pub max_grad_norm: f64,
}

impl Default for DtConfig {
    fn default() -> Self {
        Self {
            context: 5,
            embed_dim: 32,
            layers: 2,
            heads: 2,
            dropout: 0.0,
            lr: 1e-3,
            target_return: 0.0,
            seed: 0,
            rtg_scale: 100.0,
            steps: 1000,
            batch_size: 32,
            max_timestep: 64,
            max_grad_norm: 1.0,
        }
    }
}

impl DtConfig {
    pub fn validate(&self) -> Result<()> {
        if self.context < 1 || self.embed_dim == 0 || self.heads == 0 || self.embed_dim % self.heads != 0 {
            return Err(invalid("need context >= 1 and embed_dim divisible by heads"));
        }
        if !(0.0..1.0).contains(&self.dropout) || !(self.lr >= 0.0) || !(self.rtg_scale > 0.0) {
            return Err(invalid("dropout must lie in [0, 1), lr >= 0, rtg_scale > 0"));
        }
        if self.batch_size == 0 || self.max_timestep == 0 {
            return Err(invalid("batch_size and max_timestep must be positive"));
        }
        Ok(())
    }
}

/// Per-feature affine normalization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], std: vec![1.0; dim] }
    }

    pub fn fit(rows: &[&[f64]]) -> Self {
        let dim = rows[0].len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for r in rows {
            for k in 0..dim {
                mean[k] += r[k] / n;
            }
        }
        let mut var = vec![0.0; dim];
        for r in rows {
            for k in 0..dim {
                var[k] += (r[k] - mean[k]) * (r[k] - mean[k]) / n;
            }
        }
        let std = var.into_iter().map(|v| if v > 1e-12 { v.sqrt() } else { 1.0 }).collect();
        Self { mean, std }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| (v - m) / s).collect()
    }

    pub fn invert(&self, z: &[f64]) -> Vec<f64> {
        z.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| v * s + m).collect()
    }
}

/// A run of consecutive triples, already normalized.
#[derive(Clone, Debug, PartialEq)]
pub struct Window {
    pub rtg: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub timesteps: Vec<usize>,
}

impl Window {
    pub fn len(&self) -> usize {
        self.rtg.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rtg.is_empty()
    }
}

/// Architecture, parameters and normalizers of a trained model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DtModel {
    pub state_dim: usize,
    pub act_dim: usize,
    pub embed_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub context: usize,
    pub max_timestep: usize,
    pub rtg_scale: f64,
    pub state_norm: Standardizer,
    pub action_norm: Standardizer,
    pub flat: Vec<f64>,
}

#[derive(Clone, Copy)]
enum Init {
    Zero,
    One,
    Normal(f64),
}

const EMBED_BLOCKS: usize = 9;
const LAYER_BLOCKS: usize = 16;

/// Block views of one forward pass.
struct Blocks<'a>(&'a [Var]);

impl Blocks<'_> {
    fn layer(&self, l: usize, k: usize) -> Var {
        self.0[EMBED_BLOCKS + l * LAYER_BLOCKS + k]
    }

    fn tail(&self, k: usize) -> Var {
        self.0[self.0.len() - 4 + k]
    }
}

/// Outputs of a forward pass.
pub struct DtForward {
    /// `n x act_dim` normalized action predictions, one per state token.
    pub actions: Var,
    /// Attention weights, `[layer][head]`, each `3n x 3n`.
    pub attention: Vec<Vec<Var>>,
}

impl DtModel {
    fn blocks_for(state_dim: usize, act_dim: usize, d: usize, layers: usize, max_timestep: usize) -> Vec<(usize, usize, Init)> {
        let w = |r: usize, c: usize| (r, c, Init::Normal(1.0 / (r as f64).sqrt()));
        let bias = |c: usize| (1, c, Init::Zero);
        let gain = |c: usize| (1, c, Init::One);
        let mut b = Vec::new();
        for rows in [1, state_dim, act_dim] {
            b.push(w(rows, d));
            b.push(bias(d));
        }
        b.push((max_timestep, d, Init::Normal(0.1)));
        b.push(gain(d));
        b.push(bias(d));
        for _ in 0..layers {
            b.push(gain(d));
            b.push(bias(d));
            for _ in 0..4 {
                b.push(w(d, d));
                b.push(bias(d));
            }
            b.push(gain(d));
            b.push(bias(d));
            b.push(w(d, 4 * d));
            b.push(bias(4 * d));
            b.push(w(4 * d, d));
            b.push(bias(d));
        }
        b.push(gain(d));
        b.push(bias(d));
        b.push((d, act_dim, Init::Normal(0.01 / (d as f64).sqrt())));
        b.push(bias(act_dim));
        b
    }

    pub fn layout_for(state_dim: usize, act_dim: usize, d: usize, layers: usize, max_timestep: usize) -> ParamLayout {
        let shapes = Self::blocks_for(state_dim, act_dim, d, layers, max_timestep).into_iter().map(|(r, c, _)| (r, c)).collect();
        ParamLayout { shapes }
    }

    pub fn layout(&self) -> ParamLayout {
        Self::layout_for(self.state_dim, self.act_dim, self.embed_dim, self.layers, self.max_timestep)
    }

    pub fn param_count(&self) -> usize {
        self.flat.len()
    }

    /// Randomly initialized model; layer-norm gains start at 1.
    pub fn new(state_dim: usize, act_dim: usize, cfg: &DtConfig) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.embed_dim;
        let mut rng = rng::substream(cfg.seed, stream::INIT);
        let mut flat = Vec::new();
        for (r, c, init) in Self::blocks_for(state_dim, act_dim, d, cfg.layers, cfg.max_timestep) {
            for _ in 0..r * c {
                flat.push(match init {
                    Init::Zero => 0.0,
                    Init::One => 1.0,
                    Init::Normal(std) => rng::normal(&mut rng, 0.0, std),
                });
            }
        }
        Ok(Self {
            state_dim,
            act_dim,
            embed_dim: d,
            layers: cfg.layers,
            heads: cfg.heads,
            context: cfg.context,
            max_timestep: cfg.max_timestep,
            rtg_scale: cfg.rtg_scale,
            state_norm: Standardizer::identity(state_dim),
            action_norm: Standardizer::identity(act_dim),
            flat,
        })
    }

    fn check(&self, w: &Window) -> Result<()> {
        if w.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if w.len() > self.context {
            return Err(Error::WindowTooLong { len: w.len(), max: self.context });
        }
        for s in &w.states {
            if s.len() != self.state_dim {
                return Err(Error::ShapeMismatch { expected: self.state_dim, got: s.len() });
            }
        }
        for a in &w.actions {
            if a.len() != self.act_dim {
                return Err(Error::ShapeMismatch { expected: self.act_dim, got: a.len() });
            }
        }
        Ok(())
    }

    fn linear(g: &mut Graph, x: Var, w: Var, b: Var) -> Var {
        let z = g.matmul(x, w);
        g.add_row(z, b)
    }

    fn norm(g: &mut Graph, x: Var, gain: Var, bias: Var) -> Var {
        let n = g.layer_norm(x, LN_EPS);
        let s = g.mul_row(n, gain);
        g.add_row(s, bias)
    }

    /// Interleaved token embeddings (`3n x d`) before the input layer norm.
    pub fn embed_graph(&self, g: &mut Graph, blocks: &[Var], w: &Window) -> Result<Var> {
        self.check(w)?;
        let n = w.len();
        let r = g.constant(Tensor::from_vec(n, 1, w.rtg.clone()));
        let s = g.constant(Tensor::from_vec(n, self.state_dim, w.states.concat()));
        let a = g.constant(Tensor::from_vec(n, self.act_dim, w.actions.concat()));
        let ts: Vec<usize> = w.timesteps.iter().map(|&t| t.min(self.max_timestep - 1)).collect();
        let time = g.gather_rows(blocks[6], &ts);
        let er = Self::linear(g, r, blocks[0], blocks[1]);
        let es = Self::linear(g, s, blocks[2], blocks[3]);
        let ea = Self::linear(g, a, blocks[4], blocks[5]);
        let er = g.add(er, time);
        let es = g.add(es, time);
        let ea = g.add(ea, time);
        Ok(g.interleave_rows(&[er, es, ea]))
    }

    /// Full forward pass. `dropout` gives the rate and mask RNG for training.
    pub fn forward_graph(
        &self,
        g: &mut Graph,
        blocks: &[Var],
        w: &Window,
        mut dropout: Option<(f64, &mut StreamRng)>,
    ) -> Result<DtForward> {
        let bl = Blocks(blocks);
        let d = self.embed_dim;
        let dh = d / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let tokens = self.embed_graph(g, blocks, w)?;
        let mut x = Self::norm(g, tokens, blocks[7], blocks[8]);
        let len = 3 * w.len();
        let mut attention = Vec::with_capacity(self.layers);
        for l in 0..self.layers {
            let h = Self::norm(g, x, bl.layer(l, 0), bl.layer(l, 1));
            let q = Self::linear(g, h, bl.layer(l, 2), bl.layer(l, 3));
            let k = Self::linear(g, h, bl.layer(l, 4), bl.layer(l, 5));
            let v = Self::linear(g, h, bl.layer(l, 6), bl.layer(l, 7));
            let mut outs = Vec::with_capacity(self.heads);
            let mut maps = Vec::with_capacity(self.heads);
            for head in 0..self.heads {
                let qh = g.slice_cols(q, head * dh, dh);
                let kh = g.slice_cols(k, head * dh, dh);
                let vh = g.slice_cols(v, head * dh, dh);
                let scores = g.matmul_t(qh, kh);
                let scores = g.scale(scores, scale);
                let att = g.causal_softmax_rows(scores);
                maps.push(att);
                outs.push(g.matmul(att, vh));
            }
            attention.push(maps);
            let cat = if outs.len() == 1 { outs[0] } else { g.concat_cols(&outs) };
            let mut o = Self::linear(g, cat, bl.layer(l, 8), bl.layer(l, 9));
            if let Some((p, rng)) = dropout.as_mut() {
                o = apply_dropout(g, o, *p, rng, len, d);
            }
            x = g.add(x, o);
            let h = Self::norm(g, x, bl.layer(l, 10), bl.layer(l, 11));
            let up = Self::linear(g, h, bl.layer(l, 12), bl.layer(l, 13));
            let act = g.gelu(up);
            let mut down = Self::linear(g, act, bl.layer(l, 14), bl.layer(l, 15));
            if let Some((p, rng)) = dropout.as_mut() {
                down = apply_dropout(g, down, *p, rng, len, d);
            }
            x = g.add(x, down);
        }
        let x = Self::norm(g, x, bl.tail(0), bl.tail(1));
        let idx: Vec<usize> = (0..w.len()).map(|i| 3 * i + 1).collect();
        let states = g.gather_rows(x, &idx);
        let actions = Self::linear(g, states, bl.tail(2), bl.tail(3));
        Ok(DtForward { actions, attention })
    }

    /// Normalized action predictions for every triple of `w`.
    pub fn predict(&self, w: &Window) -> Result<Vec<Vec<f64>>> {
        let mut g = Graph::new();
        let blocks = self.layout().bind_constants(&mut g, &self.flat);
        let f = self.forward_graph(&mut g, &blocks, w, None)?;
        let t = g.value(f.actions);
        Ok((0..t.rows).map(|i| t.row(i).to_vec()).collect())
    }

    /// Attention weights `[layer][head]` for `w`.
    pub fn attention_maps(&self, w: &Window) -> Result<Vec<Vec<Tensor>>> {
        let mut g = Graph::new();
        let blocks = self.layout().bind_constants(&mut g, &self.flat);
        let f = self.forward_graph(&mut g, &blocks, w, None)?;
        Ok(f.attention.iter().map(|maps| maps.iter().map(|&m| g.value(m).clone()).collect()).collect())
    }

    /// Mean squared error over a set of windows and its gradient.
    pub fn loss_and_grad(&self, windows: &[&Window], dropout: Option<(f64, &mut StreamRng)>) -> Result<(f64, Vec<f64>)> {
        let mut g = Graph::new();
        let layout = self.layout();
        let blocks = layout.bind(&mut g, &self.flat);
        let mut dropout = dropout;
        let mut total: Option<Var> = None;
        let mut count = 0usize;
        for w in windows {
            let drop = dropout.as_mut().map(|(p, r)| (*p, &mut **r));
            let f = self.forward_graph(&mut g, &blocks, w, drop)?;
            let target = g.constant(Tensor::from_vec(w.len(), self.act_dim, w.actions.concat()));
            let err = g.sub(f.actions, target);
            let sq = g.square(err);
            let s = g.sum(sq);
            total = Some(match total {
                Some(t) => g.add(t, s),
                None => s,
            });
            count += w.len() * self.act_dim;
        }
        let total = total.ok_or(Error::EmptyDataset)?;
        let loss = g.scale(total, 1.0 / count as f64);
        let value = g.value(loss).data[0];
        let grads = g.backward(loss);
        Ok((value, layout.collect(&grads, &blocks)))
    }

    /// Window of the last `context` records with normalized contents.
    pub fn window(&self, records: &[Record], rtg: &[f64]) -> Window {
        Window {
            rtg: rtg.iter().map(|r| r / self.rtg_scale).collect(),
            states: records.iter().map(|r| self.state_norm.apply(&r.obs.features)).collect(),
            actions: records.iter().map(|r| self.action_norm.apply(&r.act.components)).collect(),
            timesteps: records.iter().map(|r| r.obs.t).collect(),
        }
    }
}

fn apply_dropout(g: &mut Graph, x: Var, p: f64, rng: &mut StreamRng, rows: usize, cols: usize) -> Var {
    if p <= 0.0 {
        return x;
    }
    let keep = 1.0 - p;
    let mask = (0..rows * cols).map(|_| if rng::uniform(rng, 0.0, 1.0) < keep { 1.0 / keep } else { 0.0 }).collect();
    let m = g.constant(Tensor::from_vec(rows, cols, mask));
    g.mul(x, m)
}

impl ParamLayout {
    /// Like `bind`, but the leaves receive no gradient.
    pub fn bind_constants(&self, graph: &mut Graph, flat: &[f64]) -> Vec<Var> {
        let mut offset = 0;
        self.shapes
            .iter()
            .map(|&(r, c)| {
                let t = Tensor::from_vec(r, c, flat[offset..offset + r * c].to_vec());
                offset += r * c;
                graph.constant(t)
            })
            .collect()
    }
}

/// Fits normalizers on `data` and cuts every trajectory into context-length
/// windows (shorter trajectories give one shorter window).
pub fn make_windows(model: &DtModel, data: &[Trajectory]) -> Vec<Window> {
    let c = model.context;
    let mut out = Vec::new();
    for traj in data {
        let n = traj.len();
        if n == 0 {
            continue;
        }
        let rtg: Vec<f64> = traj.records.iter().map(|r| r.rtg).collect();
        if n <= c {
            out.push(model.window(&traj.records, &rtg));
            continue;
        }
        for s in 0..=n - c {
            out.push(model.window(&traj.records[s..s + c], &rtg[s..s + c]));
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct DtTrainOutput {
    pub model: DtModel,
    /// Mean loss of each training step.
    pub losses: Vec<f64>,
}

/// Fits a model to `data` by minimizing the action MSE with Adam. Uses every
/// window each step when `batch_size` covers the dataset.
pub fn dt_train(data: &[Trajectory], cfg: &DtConfig) -> Result<DtTrainOutput> {
    cfg.validate()?;
    let first = data.iter().find(|t| !t.is_empty()).ok_or(Error::EmptyDataset)?;
    let state_dim = first.records[0].obs.features.len();
    let act_dim = first.records[0].act.components.len();
    let mut model = DtModel::new(state_dim, act_dim, cfg)?;
    let states: Vec<&[f64]> = data.iter().flat_map(|t| t.records.iter().map(|r| r.obs.features.as_slice())).collect();
    let actions: Vec<&[f64]> = data.iter().flat_map(|t| t.records.iter().map(|r| r.act.components.as_slice())).collect();
    model.state_norm = Standardizer::fit(&states);
    model.action_norm = Standardizer::fit(&actions);
    let windows = make_windows(&model, data);
    let mut adam = Adam::new(model.flat.len(), cfg.lr);
    let mut rng = rng::substream(cfg.seed, stream::SAMPLING);
    let mut drop_rng = rng::substream(rng::mix_seed(cfg.seed, 1), stream::SAMPLING);
    let mut order: Vec<usize> = (0..windows.len()).collect();
    let mut losses = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let batch: Vec<&Window> = if cfg.batch_size >= windows.len() {
            windows.iter().collect()
        } else {
            let (picked, _) = order.partial_shuffle(&mut rng, cfg.batch_size);
            picked.iter().map(|&i| &windows[i]).collect()
        };
        let drop = if cfg.dropout > 0.0 { Some((cfg.dropout, &mut drop_rng)) } else { None };
        let (loss, mut grad) = model.loss_and_grad(&batch, drop)?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteLoss);
        }
        clip_grad_norm(&mut grad, cfg.max_grad_norm);
        adam.lr = cfg.lr * 0.5 * (1.0 + (core::f64::consts::PI * step as f64 / cfg.steps as f64).cos());
        adam.step(&mut model.flat, &grad);
        losses.push(loss);
    }
    Ok(DtTrainOutput { model, losses })
}

/// Plays one episode, conditioning on the remaining target return.
pub fn dt_rollout<E: Environment + ?Sized>(env: &mut E, model: &DtModel, target_return: f64, seed: u64) -> Result<Trajectory> {
    let mut obs = env.reset(seed);
    let mut records: Vec<Record> = Vec::with_capacity(env.horizon());
    let mut rtgs: Vec<f64> = Vec::with_capacity(env.horizon());
    let mut remaining = target_return;
    let placeholder = EnvAction::new(model.action_norm.mean.clone());
    while records.len() < env.horizon() {
        records.push(Record { rtg: remaining, obs: obs.clone(), act: placeholder.clone(), reward: 0.0 });
        rtgs.push(remaining);
        let start = records.len().saturating_sub(model.context);
        let w = model.window(&records[start..], &rtgs[start..]);
        let pred = model.predict(&w)?;
        let action = EnvAction::new(model.action_norm.invert(pred.last().expect("nonempty window")));
        let (applied, _) = env.action_layout().clamp(&action)?;
        let step = env.step(&action)?;
        let last = records.last_mut().expect("just pushed");
        last.act = applied;
        last.reward = step.reward;
        remaining -= step.reward;
        obs = step.obs;
        if step.done {
            break;
        }
    }
    let mut traj = Trajectory { records, gamma: 1.0, seed };
    traj.fill_returns_to_go();
    Ok(traj)
}

/// Episode returns of [`dt_rollout`] for seeds `seed0 .. seed0 + n`.
pub fn dt_evaluate<E: Environment + ?Sized>(
    env: &mut E,
    model: &DtModel,
    target_return: f64,
    n: usize,
    seed0: u64,
) -> Result<EvalStats> {
    let samples = (0..n as u64)
        .map(|k| dt_rollout(env, model, target_return, seed0 + k).map(|t| t.total_return()))
        .collect::<Result<Vec<_>>>()?;
    EvalStats::from_samples(samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> (DtModel, Window) {
        let cfg = DtConfig { context: 3, embed_dim: 8, layers: 1, heads: 2, ..DtConfig::default() };
        let m = DtModel::new(2, 1, &cfg).unwrap();
        let w = Window {
            rtg: vec![1.0, 0.5, 0.2],
            states: vec![vec![0.1, -0.3], vec![0.4, 0.2], vec![-0.5, 0.9]],
            actions: vec![vec![0.3], vec![-0.2], vec![0.8]],
            timesteps: vec![0, 1, 2],
        };
        (m, w)
    }

    #[test]
    fn layout_matches_flat() {
        let (m, _) = tiny();
        assert_eq!(m.layout().total(), m.flat.len());
        assert!(m.param_count() < 100_000);
    }

    #[test]
    fn window_too_long() {
        let (m, mut w) = tiny();
        w.rtg.push(0.0);
        w.states.push(vec![0.0, 0.0]);
        w.actions.push(vec![0.0]);
        w.timesteps.push(3);
        assert_eq!(m.predict(&w), Err(Error::WindowTooLong { len: 4, max: 3 }));
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let (m, w) = tiny();
        for layer in m.attention_maps(&w).unwrap() {
            for map in layer {
                assert_eq!(map.shape(), (9, 9));
                for i in 0..9 {
                    assert!((map.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-6);
                }
            }
        }
    }
}
