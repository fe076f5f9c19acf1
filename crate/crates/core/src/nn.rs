//! Dense networks, stochastic action heads, observation normalization and
//! the Adam optimizer.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, ParamLayout, Tensor, Var};
use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};
use crate::sim::{ActionLayout, EnvAction, SliceKind};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Fully connected tanh network with a linear output layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub sizes: Vec<usize>,
    /// For each layer: `W` (`n_in x n_out`, row-major) then `b` (`n_out`).
    pub flat: Vec<f64>,
}

/// `sum (n_in + 1) * n_out` over consecutive layer sizes.
pub fn mlp_param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
}

fn push_mlp_layout(layout: &mut ParamLayout, sizes: &[usize]) {
    for w in sizes.windows(2) {
        layout.push(w[0], w[1]);
        layout.push(1, w[1]);
    }
}

fn init_mlp(sizes: &[usize], out_gain: f64, rng: &mut StreamRng) -> Vec<f64> {
    let mut flat = Vec::with_capacity(mlp_param_count(sizes));
    let layers = sizes.len() - 1;
    for (l, w) in sizes.windows(2).enumerate() {
        let gain = if l + 1 == layers { out_gain } else { 1.0 };
        let std = gain / (w[0] as f64).sqrt();
        flat.extend((0..w[0] * w[1]).map(|_| rng::normal(rng, 0.0, std)));
        flat.extend(core::iter::repeat_n(0.0, w[1]));
    }
    flat
}

/// Forward on the tape. `blocks` alternates weight and bias vars.
pub fn mlp_graph(g: &mut Graph, blocks: &[Var], x: Var, final_tanh: bool) -> Var {
    let layers = blocks.len() / 2;
    let mut h = x;
    for l in 0..layers {
        let z = g.matmul(h, blocks[2 * l]);
        h = g.add_row(z, blocks[2 * l + 1]);
        if l + 1 < layers || final_tanh {
            h = g.tanh(h);
        }
    }
    h
}

/// Loss `sum((mlp(x) - y)^2)` and its gradient in the flat parameters.
pub fn mlp_loss_and_grad(sizes: &[usize], flat: &[f64], x: &Tensor, y: &Tensor, final_tanh: bool) -> (f64, Vec<f64>) {
    let mut layout = ParamLayout::default();
    push_mlp_layout(&mut layout, sizes);
    let mut g = Graph::new();
    let blocks = layout.bind(&mut g, flat);
    let xv = g.constant(x.clone());
    let yv = g.constant(y.clone());
    let out = mlp_graph(&mut g, &blocks, xv, final_tanh);
    let d = g.sub(out, yv);
    let sq = g.square(d);
    let loss = g.sum(sq);
    let grads = g.backward(loss);
    (g.value(loss).data[0], layout.collect(&grads, &blocks))
}

/// Plain forward for one input vector.
pub fn mlp_forward(sizes: &[usize], flat: &[f64], x: &[f64], final_tanh: bool) -> Vec<f64> {
    let layers = sizes.len() - 1;
    let mut h = x.to_vec();
    let mut offset = 0;
    for l in 0..layers {
        let (n_in, n_out) = (sizes[l], sizes[l + 1]);
        let w = &flat[offset..offset + n_in * n_out];
        let b = &flat[offset + n_in * n_out..offset + (n_in + 1) * n_out];
        offset += (n_in + 1) * n_out;
        let mut out = b.to_vec();
        for (i, &hi) in h.iter().enumerate() {
            for (o, &wv) in out.iter_mut().zip(&w[i * n_out..(i + 1) * n_out]) {
                *o += hi * wv;
            }
        }
        if l + 1 < layers || final_tanh {
            out.iter_mut().for_each(|v| *v = v.tanh());
        }
        h = out;
    }
    h
}

impl MlpParams {
    pub fn new(sizes: Vec<usize>, seed: u64) -> Self {
        let mut rng = rng::substream(seed, rng::stream::INIT);
        let flat = init_mlp(&sizes, 1.0, &mut rng);
        Self { sizes, flat }
    }

    pub fn zeros(sizes: Vec<usize>) -> Self {
        let flat = vec![0.0; mlp_param_count(&sizes)];
        Self { sizes, flat }
    }

    pub fn param_count(&self) -> usize {
        self.flat.len()
    }

    pub fn layout(&self) -> ParamLayout {
        let mut l = ParamLayout::default();
        push_mlp_layout(&mut l, &self.sizes);
        l
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.sizes[0] {
            return Err(Error::ShapeMismatch { expected: self.sizes[0], got: x.len() });
        }
        Ok(mlp_forward(&self.sizes, &self.flat, x, false))
    }
}

/// How one action component is produced from the network output.
#[derive(Clone, Debug, PartialEq)]
pub enum ComponentHead {
    /// Gaussian raw value mapped to `lo + (hi - lo) * sigmoid(u)`.
    Squashed { lo: f64, hi: f64 },
    /// Gaussian raw logit; the components of one group go through a softmax.
    Simplex { group: usize },
    /// Softmax over the integers `lo, lo + 1, ..., lo + n - 1`.
    Categorical { lo: f64, n: usize },
}

/// Maps between raw head samples and environment actions.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionAdapter {
    pub heads: Vec<ComponentHead>,
    /// Component indices of each simplex group.
    pub groups: Vec<Vec<usize>>,
    /// Index into the Gaussian block (or the categorical logit offset).
    slots: Vec<usize>,
    pub n_gaussian: usize,
    pub n_logits: usize,
}

impl ActionAdapter {
    /// Integer slices with at most `categorical_max` values get a categorical
    /// head; everything else is Gaussian.
    pub fn new(layout: &ActionLayout, categorical_max: usize) -> Self {
        let mut heads = Vec::new();
        let mut groups = Vec::new();
        let mut offset = 0;
        for s in &layout.slices {
            match &s.kind {
                SliceKind::Simplex { groups: gs } => {
                    let mut membership = vec![usize::MAX; s.len()];
                    for g in gs {
                        for &k in g {
                            membership[k] = groups.len();
                        }
                        groups.push(g.iter().map(|k| offset + k).collect());
                    }
                    for k in 0..s.len() {
                        heads.push(if membership[k] == usize::MAX {
                            ComponentHead::Squashed { lo: s.lo[k], hi: s.hi[k] }
                        } else {
                            ComponentHead::Simplex { group: membership[k] }
                        });
                    }
                }
                SliceKind::Integer => {
                    for k in 0..s.len() {
                        let n = (s.hi[k] - s.lo[k]).round() as usize + 1;
                        heads.push(if n <= categorical_max {
                            ComponentHead::Categorical { lo: s.lo[k].round(), n }
                        } else {
                            ComponentHead::Squashed { lo: s.lo[k], hi: s.hi[k] }
                        });
                    }
                }
                SliceKind::Continuous => {
                    for k in 0..s.len() {
                        heads.push(ComponentHead::Squashed { lo: s.lo[k], hi: s.hi[k] });
                    }
                }
            }
            offset += s.len();
        }
        let mut slots = Vec::with_capacity(heads.len());
        let mut n_gaussian = 0;
        let mut n_logits = 0;
        for h in &heads {
            match h {
                ComponentHead::Categorical { n, .. } => {
                    slots.push(n_logits);
                    n_logits += n;
                }
                _ => {
                    slots.push(n_gaussian);
                    n_gaussian += 1;
                }
            }
        }
        Self { heads, groups, slots, n_gaussian, n_logits }
    }

    pub fn n_components(&self) -> usize {
        self.heads.len()
    }

    /// Width of the policy head output: Gaussian means then logits.
    pub fn output_len(&self) -> usize {
        self.n_gaussian + self.n_logits
    }

    /// Environment action for a raw sample (one entry per component; the
    /// category index for categorical heads).
    pub fn to_env(&self, raw: &[f64]) -> EnvAction {
        let mut out = vec![0.0; self.heads.len()];
        for (k, h) in self.heads.iter().enumerate() {
            out[k] = match *h {
                ComponentHead::Squashed { lo, hi } => lo + (hi - lo) * crate::pricing::logistic(raw[k]),
                ComponentHead::Categorical { lo, .. } => lo + raw[k],
                ComponentHead::Simplex { .. } => 0.0,
            };
        }
        for g in &self.groups {
            let max = g.iter().map(|&k| raw[k]).fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = g.iter().map(|&k| (raw[k] - max).exp()).sum();
            for &k in g {
                out[k] = (raw[k] - max).exp() / z;
            }
        }
        EnvAction::new(out)
    }

    /// Samples a raw action from head output `out` with log-stds `log_std`.
    pub fn sample(&self, out: &[f64], log_std: &[f64], rng: &mut StreamRng) -> Vec<f64> {
        self.heads
            .iter()
            .enumerate()
            .map(|(k, h)| {
                let slot = self.slots[k];
                match *h {
                    ComponentHead::Categorical { n, .. } => {
                        let logits = &out[self.n_gaussian + slot..self.n_gaussian + slot + n];
                        let probs = softmax(logits);
                        let u: f64 = rng::uniform(rng, 0.0, 1.0);
                        let mut acc = 0.0;
                        let mut pick = n - 1;
                        for (i, p) in probs.iter().enumerate() {
                            acc += p;
                            if u < acc {
                                pick = i;
                                break;
                            }
                        }
                        pick as f64
                    }
                    _ => out[slot] + log_std[slot].exp() * rng::standard_normal(rng),
                }
            })
            .collect()
    }

    /// Mode of the action distribution.
    pub fn mode(&self, out: &[f64]) -> Vec<f64> {
        self.heads
            .iter()
            .enumerate()
            .map(|(k, h)| {
                let slot = self.slots[k];
                match *h {
                    ComponentHead::Categorical { n, .. } => {
                        let logits = &out[self.n_gaussian + slot..self.n_gaussian + slot + n];
                        let mut best = 0;
                        for i in 1..n {
                            if logits[i] > logits[best] {
                                best = i;
                            }
                        }
                        best as f64
                    }
                    _ => out[slot],
                }
            })
            .collect()
    }

    /// Log-density of a raw sample.
    pub fn log_prob(&self, out: &[f64], log_std: &[f64], raw: &[f64]) -> f64 {
        let mut lp = 0.0;
        for (k, h) in self.heads.iter().enumerate() {
            let slot = self.slots[k];
            match *h {
                ComponentHead::Categorical { n, .. } => {
                    let logits = &out[self.n_gaussian + slot..self.n_gaussian + slot + n];
                    lp += log_softmax(logits)[raw[k] as usize];
                }
                _ => {
                    let z = (raw[k] - out[slot]) / log_std[slot].exp();
                    lp += -0.5 * z * z - log_std[slot] - 0.5 * LN_2PI;
                }
            }
        }
        lp
    }

    /// Batched log-probabilities (`B x 1`) and entropies (`B x 1`) on the tape.
    pub fn log_prob_graph(&self, g: &mut Graph, out: Var, log_std: Option<Var>, raw: &[Vec<f64>]) -> (Var, Var) {
        let b = raw.len();
        let mut terms: Vec<(Var, Var)> = Vec::new();
        if self.n_gaussian > 0 {
            let log_std = log_std.expect("gaussian heads need log-std");
            let mu = g.slice_cols(out, 0, self.n_gaussian);
            let mut u = Vec::with_capacity(b * self.n_gaussian);
            for r in raw {
                for (k, h) in self.heads.iter().enumerate() {
                    if !matches!(h, ComponentHead::Categorical { .. }) {
                        u.push(r[k]);
                    }
                }
            }
            let u = g.constant(Tensor::from_vec(b, self.n_gaussian, u));
            let diff = g.sub(u, mu);
            let neg = g.scale(log_std, -1.0);
            let inv_std = g.exp(neg);
            let z = g.mul_row(diff, inv_std);
            let sq = g.square(z);
            let ssq = g.sum_cols(sq);
            let half = g.scale(ssq, -0.5);
            let ls_sum = g.sum(log_std);
            let c = g.add_scalar(ls_sum, 0.5 * LN_2PI * self.n_gaussian as f64);
            let neg_c = g.scale(c, -1.0);
            let lp = g.add_row(half, neg_c);
            let zero = g.constant(Tensor::zeros(b, 1));
            let ent_c = g.add_scalar(ls_sum, 0.5 * (1.0 + LN_2PI) * self.n_gaussian as f64);
            let ent = g.add_row(zero, ent_c);
            terms.push((lp, ent));
        }
        for (k, h) in self.heads.iter().enumerate() {
            if let ComponentHead::Categorical { n, .. } = *h {
                let logits = g.slice_cols(out, self.n_gaussian + self.slots[k], n);
                let lsm = g.log_softmax_rows(logits);
                let mut onehot = vec![0.0; b * n];
                for (i, r) in raw.iter().enumerate() {
                    onehot[i * n + r[k] as usize] = 1.0;
                }
                let mask = g.constant(Tensor::from_vec(b, n, onehot));
                let picked = g.mul(lsm, mask);
                let lp = g.sum_cols(picked);
                let p = g.exp(lsm);
                let plp = g.mul(p, lsm);
                let s = g.sum_cols(plp);
                let ent = g.scale(s, -1.0);
                terms.push((lp, ent));
            }
        }
        let (mut lp, mut ent) = terms[0];
        for &(l, e) in &terms[1..] {
            lp = g.add(lp, l);
            ent = g.add(ent, e);
        }
        (lp, ent)
    }
}

fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

fn log_softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lz = x.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
    x.iter().map(|v| v - lz).collect()
}

/// Entropy of a diagonal Gaussian with the given log-stds.
pub fn gaussian_entropy(log_std: &[f64]) -> f64 {
    log_std.iter().map(|s| s + 0.5 * (1.0 + LN_2PI)).sum()
}

/// Shapes and sizes of an actor-critic network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetShape {
    pub obs_dim: usize,
    pub hidden: Vec<usize>,
    pub policy_out: usize,
    pub n_log_std: usize,
    pub shared_trunk: bool,
}

impl NetShape {
    fn trunk_sizes(&self) -> Vec<usize> {
        if self.shared_trunk {
            let mut s = vec![self.obs_dim];
            s.extend(&self.hidden);
            s
        } else {
            Vec::new()
        }
    }

    fn head_sizes(&self, out: usize) -> Vec<usize> {
        let mut s = if self.shared_trunk {
            vec![*self.hidden.last().unwrap_or(&self.obs_dim)]
        } else {
            let mut s = vec![self.obs_dim];
            s.extend(&self.hidden);
            s
        };
        s.push(out);
        s
    }

    pub fn layout(&self) -> ParamLayout {
        let mut l = ParamLayout::default();
        let trunk = self.trunk_sizes();
        if trunk.len() > 1 {
            push_mlp_layout(&mut l, &trunk);
        }
        push_mlp_layout(&mut l, &self.head_sizes(self.policy_out));
        push_mlp_layout(&mut l, &self.head_sizes(1));
        if self.n_log_std > 0 {
            l.push(1, self.n_log_std);
        }
        l
    }

    pub fn param_count(&self) -> usize {
        self.layout().total()
    }

    fn block_counts(&self) -> (usize, usize, usize) {
        let trunk = self.trunk_sizes();
        let t = if trunk.len() > 1 { 2 * (trunk.len() - 1) } else { 0 };
        let p = 2 * (self.head_sizes(self.policy_out).len() - 1);
        (t, p, p)
    }
}

/// Policy and value networks stored as one flat parameter vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub shape: NetShape,
    pub flat: Vec<f64>,
}

/// Outputs of one forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct Forward {
    pub policy: Vec<f64>,
    pub value: f64,
}

impl PolicyParams {
    pub fn new(shape: NetShape, init_log_std: f64, seed: u64) -> Self {
        let mut rng = rng::substream(seed, rng::stream::INIT);
        let mut flat = Vec::with_capacity(shape.param_count());
        let trunk = shape.trunk_sizes();
        if trunk.len() > 1 {
            flat.extend(init_mlp(&trunk, 1.0, &mut rng));
        }
        flat.extend(init_mlp(&shape.head_sizes(shape.policy_out), 0.01, &mut rng));
        flat.extend(init_mlp(&shape.head_sizes(1), 1.0, &mut rng));
        flat.extend(core::iter::repeat_n(init_log_std, shape.n_log_std));
        Self { shape, flat }
    }

    pub fn zeros(shape: NetShape) -> Self {
        let flat = vec![0.0; shape.param_count()];
        Self { shape, flat }
    }

    pub fn log_std(&self) -> &[f64] {
        &self.flat[self.flat.len() - self.shape.n_log_std..]
    }

    pub fn forward(&self, obs: &[f64]) -> Result<Forward> {
        let s = &self.shape;
        if obs.len() != s.obs_dim {
            return Err(Error::ShapeMismatch { expected: s.obs_dim, got: obs.len() });
        }
        let trunk = s.trunk_sizes();
        let mut offset = 0;
        let z = if trunk.len() > 1 {
            let n = mlp_param_count(&trunk);
            let z = mlp_forward(&trunk, &self.flat[..n], obs, true);
            offset = n;
            z
        } else {
            obs.to_vec()
        };
        let ps = s.head_sizes(s.policy_out);
        let np = mlp_param_count(&ps);
        let policy = mlp_forward(&ps, &self.flat[offset..offset + np], &z, false);
        offset += np;
        let vs = s.head_sizes(1);
        let nv = mlp_param_count(&vs);
        let value = mlp_forward(&vs, &self.flat[offset..offset + nv], &z, false)[0];
        Ok(Forward { policy, value })
    }

    /// Batched forward on the tape: `(policy B x out, value B x 1, log_std)`.
    pub fn forward_graph(&self, g: &mut Graph, blocks: &[Var], x: Var) -> (Var, Var, Option<Var>) {
        let (t, p, v) = self.shape.block_counts();
        let z = if t > 0 { mlp_graph(g, &blocks[..t], x, true) } else { x };
        let pi = mlp_graph(g, &blocks[t..t + p], z, false);
        let val = mlp_graph(g, &blocks[t + p..t + p + v], z, false);
        let ls = if self.shape.n_log_std > 0 { Some(blocks[t + p + v]) } else { None };
        (pi, val, ls)
    }
}

/// Running mean and variance (parallel Welford merge).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunningNorm {
    pub count: f64,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub clip: f64,
}

impl RunningNorm {
    pub fn new(dim: usize) -> Self {
        Self { count: 0.0, mean: vec![0.0; dim], var: vec![1.0; dim], clip: 10.0 }
    }

    pub fn update(&mut self, batch: &[Vec<f64>]) {
        if batch.is_empty() {
            return;
        }
        let n = batch.len() as f64;
        let dim = self.mean.len();
        let mut bm = vec![0.0; dim];
        for x in batch {
            for (m, v) in bm.iter_mut().zip(x) {
                *m += v / n;
            }
        }
        let mut bv = vec![0.0; dim];
        for x in batch {
            for k in 0..dim {
                bv[k] += (x[k] - bm[k]) * (x[k] - bm[k]) / n;
            }
        }
        let total = self.count + n;
        for k in 0..dim {
            let delta = bm[k] - self.mean[k];
            let m2 = self.var[k] * self.count + bv[k] * n + delta * delta * self.count * n / total;
            self.mean[k] += delta * n / total;
            self.var[k] = m2 / total;
        }
        self.count = total;
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.var)
            .map(|((v, m), s)| ((v - m) / (s + 1e-8).sqrt()).clamp(-self.clip, self.clip))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    /// Gradient-descent step on `params`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        if self.lr == 0.0 {
            return;
        }
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / b1t;
            let vh = self.v[i] / b2t;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

/// Scales `grad` in place so its L2 norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if max_norm > 0.0 && norm > max_norm {
        let k = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= k);
    }
    norm
}
