//! Reverse-mode differentiation over dense row-major matrices.
//!
//! A [`Graph`] records every operation eagerly; [`Graph::backward`] walks the
//! tape once in reverse and returns the gradient of a scalar loss with
//! respect to every node.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "tensor shape does not match data");
        Self { rows, cols, data }
    }

    pub fn row_vector(data: Vec<f64>) -> Self {
        Self { rows: 1, cols: data.len(), data }
    }

    pub fn scalar(v: f64) -> Self {
        Self { rows: 1, cols: 1, data: vec![v] }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&x| f(x)).collect() }
    }
}

/// `a (n x k) * b (k x m)`, accumulated into `out`.
fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], n: usize, k: usize, m: usize) {
    for i in 0..n {
        let out_row = &mut out[i * m..(i + 1) * m];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let b_row = &b[p * m..(p + 1) * m];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += aip * bv;
            }
        }
    }
}

/// `a (n x k) * b^T` where `b` is `m x k`.
fn matmul_t_into(a: &[f64], b: &[f64], out: &mut [f64], n: usize, k: usize, m: usize) {
    for i in 0..n {
        let a_row = &a[i * k..(i + 1) * k];
        for j in 0..m {
            let b_row = &b[j * k..(j + 1) * k];
            out[i * m + j] += a_row.iter().zip(b_row).map(|(x, y)| x * y).sum::<f64>();
        }
    }
}

/// `a^T (k x n) * b (n x m)` where `a` is `n x k`.
fn t_matmul_into(a: &[f64], b: &[f64], out: &mut [f64], n: usize, k: usize, m: usize) {
    for i in 0..n {
        let b_row = &b[i * m..(i + 1) * m];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let out_row = &mut out[p * m..(p + 1) * m];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += aip * bv;
            }
        }
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + 0.044715 * x * x * x);
    let th = u.tanh();
    0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Tanh(Var),
    Exp(Var),
    Gelu(Var),
    Square(Var),
    Min(Var, Var),
    Clamp(Var, f64, f64),
    SumAll(Var),
    SumCols(Var),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    LayerNorm(Var, Vec<f64>),
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    Interleave(Vec<Var>),
    Transpose(Var),
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Gradients of a scalar with respect to each node of a graph.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient for `v`; zeros if the loss does not depend on it.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    /// Differentiable input (a parameter block).
    pub fn param(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Input that receives no gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (n, k) = self.shape(a);
        let (k2, m) = self.shape(b);
        assert_eq!(k, k2, "matmul inner dimensions differ");
        let mut out = Tensor::zeros(n, m);
        matmul_into(&self.value(a).data, &self.value(b).data, &mut out.data, n, k, m);
        let ng = self.ng(&[a, b]);
        self.push(out, Op::MatMul(a, b), ng)
    }

    /// `a * b^T`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let (n, k) = self.shape(a);
        let (m, k2) = self.shape(b);
        assert_eq!(k, k2, "matmul_t inner dimensions differ");
        let mut out = Tensor::zeros(n, m);
        matmul_t_into(&self.value(a).data, &self.value(b).data, &mut out.data, n, k, m);
        let ng = self.ng(&[a, b]);
        self.push(out, Op::MatMulT(a, b), ng)
    }

    fn zip(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "elementwise shapes differ");
        let va = &self.value(a).data;
        let vb = &self.value(b).data;
        let data = va.iter().zip(vb).map(|(&x, &y)| f(x, y)).collect();
        let (r, c) = self.shape(a);
        let ng = self.ng(&[a, b]);
        self.push(Tensor::from_vec(r, c, data), op, ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn min(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, f64::min, Op::Min(a, b))
    }

    /// Adds a `1 x m` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (n, m) = self.shape(a);
        assert_eq!(self.shape(row), (1, m), "add_row expects a 1 x cols row");
        let r = &self.value(row).data;
        let mut out = self.value(a).clone();
        for i in 0..n {
            for (o, &x) in out.data[i * m..(i + 1) * m].iter_mut().zip(r) {
                *o += x;
            }
        }
        let ng = self.ng(&[a, row]);
        self.push(out, Op::AddRow(a, row), ng)
    }

    /// Multiplies every row of `a` elementwise by a `1 x m` row.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Var {
        let (n, m) = self.shape(a);
        assert_eq!(self.shape(row), (1, m), "mul_row expects a 1 x cols row");
        let r = &self.value(row).data;
        let mut out = self.value(a).clone();
        for i in 0..n {
            for (o, &x) in out.data[i * m..(i + 1) * m].iter_mut().zip(r) {
                *o *= x;
            }
        }
        let ng = self.ng(&[a, row]);
        self.push(out, Op::MulRow(a, row), ng)
    }

    /// Multiplies row `i` of `a` by entry `i` of an `n x 1` column.
    pub fn mul_col(&mut self, a: Var, col: Var) -> Var {
        let (n, m) = self.shape(a);
        assert_eq!(self.shape(col), (n, 1), "mul_col expects an n x 1 column");
        let c = &self.value(col).data;
        let mut out = self.value(a).clone();
        for i in 0..n {
            for o in &mut out.data[i * m..(i + 1) * m] {
                *o *= c[i];
            }
        }
        let ng = self.ng(&[a, col]);
        self.push(out, Op::MulCol(a, col), ng)
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let out = self.value(a).map(f);
        let ng = self.ng(&[a]);
        self.push(out, op, ng)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        self.unary(a, |x| k * x, Op::Scale(a, k))
    }

    pub fn add_scalar(&mut self, a: Var, k: f64) -> Var {
        self.unary(a, |x| x + k, Op::AddScalar(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp, Op::Exp(a))
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        self.unary(a, gelu, Op::Gelu(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, |x| x * x, Op::Square(a))
    }

    /// Gradient passes where `lo <= a <= hi`.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.unary(a, |x| x.clamp(lo, hi), Op::Clamp(a, lo, hi))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data.iter().sum();
        let ng = self.ng(&[a]);
        self.push(Tensor::scalar(s), Op::SumAll(a), ng)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).data.len() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// Row sums as an `n x 1` column.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let (n, m) = self.shape(a);
        let v = &self.value(a).data;
        let data = (0..n).map(|i| v[i * m..(i + 1) * m].iter().sum()).collect();
        let ng = self.ng(&[a]);
        self.push(Tensor::from_vec(n, 1, data), Op::SumCols(a), ng)
    }

    fn softmax_impl(&mut self, a: Var, log: bool, causal: bool) -> Var {
        let (n, m) = self.shape(a);
        let v = &self.value(a).data;
        let mut out = Tensor::zeros(n, m);
        for i in 0..n {
            let width = if causal { (i + 1).min(m) } else { m };
            let row = &v[i * m..i * m + width];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|x| (x - max).exp()).sum();
            let lz = z.ln();
            for j in 0..m {
                out.data[i * m + j] = if j >= width {
                    if log {
                        f64::NEG_INFINITY
                    } else {
                        0.0
                    }
                } else if log {
                    row[j] - max - lz
                } else {
                    (row[j] - max).exp() / z
                };
            }
        }
        let ng = self.ng(&[a]);
        let op = if log { Op::LogSoftmaxRows(a) } else { Op::SoftmaxRows(a) };
        self.push(out, op, ng)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        self.softmax_impl(a, false, false)
    }

    /// Row softmax where row `i` only sees columns `0..=i`; masked entries are 0.
    pub fn causal_softmax_rows(&mut self, a: Var) -> Var {
        self.softmax_impl(a, false, true)
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        self.softmax_impl(a, true, false)
    }

    /// Standardizes each row to zero mean and unit variance.
    pub fn layer_norm(&mut self, a: Var, eps: f64) -> Var {
        let (n, m) = self.shape(a);
        let v = &self.value(a).data;
        let mut out = Tensor::zeros(n, m);
        let mut inv_std = Vec::with_capacity(n);
        for i in 0..n {
            let row = &v[i * m..(i + 1) * m];
            let mu = row.iter().sum::<f64>() / m as f64;
            let var = row.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / m as f64;
            let is = 1.0 / (var + eps).sqrt();
            for j in 0..m {
                out.data[i * m + j] = (row[j] - mu) * is;
            }
            inv_std.push(is);
        }
        let ng = self.ng(&[a]);
        self.push(out, Op::LayerNorm(a, inv_std), ng)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let (n, m) = self.shape(a);
        assert!(start + len <= m, "column slice out of range");
        let v = &self.value(a).data;
        let mut data = Vec::with_capacity(n * len);
        for i in 0..n {
            data.extend_from_slice(&v[i * m + start..i * m + start + len]);
        }
        let ng = self.ng(&[a]);
        self.push(Tensor::from_vec(n, len, data), Op::SliceCols(a, start), ng)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let n = self.shape(parts[0]).0;
        let total: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut out = Tensor::zeros(n, total);
        let mut offset = 0;
        for &p in parts {
            let (pn, pm) = self.shape(p);
            assert_eq!(pn, n, "concat_cols row counts differ");
            let v = &self.value(p).data;
            for i in 0..n {
                out.data[i * total + offset..i * total + offset + pm].copy_from_slice(&v[i * pm..(i + 1) * pm]);
            }
            offset += pm;
        }
        let ng = self.ng(parts);
        self.push(out, Op::ConcatCols(parts.to_vec()), ng)
    }

    /// Rows of `a` picked by index (repeats allowed).
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Var {
        let (_, m) = self.shape(a);
        let v = &self.value(a).data;
        let mut data = Vec::with_capacity(idx.len() * m);
        for &i in idx {
            data.extend_from_slice(&v[i * m..(i + 1) * m]);
        }
        let ng = self.ng(&[a]);
        self.push(Tensor::from_vec(idx.len(), m, data), Op::GatherRows(a, idx.to_vec()), ng)
    }

    /// Row `k * i + j` of the output is row `i` of `parts[j]`.
    pub fn interleave_rows(&mut self, parts: &[Var]) -> Var {
        let (n, m) = self.shape(parts[0]);
        let k = parts.len();
        let mut out = Tensor::zeros(n * k, m);
        for (j, &p) in parts.iter().enumerate() {
            assert_eq!(self.shape(p), (n, m), "interleave shapes differ");
            let v = &self.value(p).data;
            for i in 0..n {
                let r = k * i + j;
                out.data[r * m..(r + 1) * m].copy_from_slice(&v[i * m..(i + 1) * m]);
            }
        }
        let ng = self.ng(parts);
        self.push(out, Op::Interleave(parts.to_vec()), ng)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let (n, m) = self.shape(a);
        let v = &self.value(a).data;
        let mut out = Tensor::zeros(m, n);
        for i in 0..n {
            for j in 0..m {
                out.data[j * n + i] = v[i * m + j];
            }
        }
        let ng = self.ng(&[a]);
        self.push(out, Op::Transpose(a), ng)
    }

    /// Gradients of the `1 x 1` node `loss` with respect to every node.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.shape(loss), (1, 1), "backward needs a scalar loss");
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for idx in (0..=loss.0).rev() {
            let g = match grads[idx].take() {
                Some(g) => g,
                None => continue,
            };
            let node = &self.nodes[idx];
            if node.needs_grad {
                self.propagate(node, &g, &mut grads);
            }
            grads[idx] = Some(g);
        }
        Gradients { grads }
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, f: impl FnOnce(&mut Tensor)) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        let slot = &mut grads[v.0];
        if slot.is_none() {
            let (r, c) = self.shape(v);
            *slot = Some(Tensor::zeros(r, c));
        }
        f(slot.as_mut().expect("initialized"));
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let y = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (n, k) = self.shape(*a);
                let m = self.shape(*b).1;
                let (va, vb) = (&self.value(*a).data, &self.value(*b).data);
                self.accumulate(grads, *a, |ga| matmul_t_into(&g.data, vb, &mut ga.data, n, m, k));
                self.accumulate(grads, *b, |gb| t_matmul_into(va, &g.data, &mut gb.data, n, k, m));
            }
            Op::MatMulT(a, b) => {
                let (n, k) = self.shape(*a);
                let m = self.shape(*b).0;
                let (va, vb) = (&self.value(*a).data, &self.value(*b).data);
                self.accumulate(grads, *a, |ga| matmul_into(&g.data, vb, &mut ga.data, n, m, k));
                self.accumulate(grads, *b, |gb| t_matmul_into(&g.data, va, &mut gb.data, n, m, k));
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, |ga| add_assign(&mut ga.data, &g.data));
                self.accumulate(grads, *b, |gb| add_assign(&mut gb.data, &g.data));
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, |ga| add_assign(&mut ga.data, &g.data));
                self.accumulate(grads, *b, |gb| {
                    for (o, x) in gb.data.iter_mut().zip(&g.data) {
                        *o -= x;
                    }
                });
            }
            Op::Mul(a, b) => {
                let (va, vb) = (&self.value(*a).data, &self.value(*b).data);
                self.accumulate(grads, *a, |ga| {
                    for ((o, x), y) in ga.data.iter_mut().zip(&g.data).zip(vb) {
                        *o += x * y;
                    }
                });
                self.accumulate(grads, *b, |gb| {
                    for ((o, x), y) in gb.data.iter_mut().zip(&g.data).zip(va) {
                        *o += x * y;
                    }
                });
            }
            Op::AddRow(a, row) => {
                let m = y.cols;
                self.accumulate(grads, *a, |ga| add_assign(&mut ga.data, &g.data));
                self.accumulate(grads, *row, |gr| {
                    for chunk in g.data.chunks(m) {
                        add_assign(&mut gr.data, chunk);
                    }
                });
            }
            Op::MulRow(a, row) => {
                let m = y.cols;
                let (va, vr) = (&self.value(*a).data, &self.value(*row).data);
                self.accumulate(grads, *a, |ga| {
                    for (i, (o, x)) in ga.data.iter_mut().zip(&g.data).enumerate() {
                        *o += x * vr[i % m];
                    }
                });
                self.accumulate(grads, *row, |gr| {
                    for (i, (x, a)) in g.data.iter().zip(va).enumerate() {
                        gr.data[i % m] += x * a;
                    }
                });
            }
            Op::MulCol(a, col) => {
                let m = y.cols;
                let (va, vc) = (&self.value(*a).data, &self.value(*col).data);
                self.accumulate(grads, *a, |ga| {
                    for (i, (o, x)) in ga.data.iter_mut().zip(&g.data).enumerate() {
                        *o += x * vc[i / m];
                    }
                });
                self.accumulate(grads, *col, |gc| {
                    for (i, (x, a)) in g.data.iter().zip(va).enumerate() {
                        gc.data[i / m] += x * a;
                    }
                });
            }
            Op::Scale(a, k) => {
                self.accumulate(grads, *a, |ga| {
                    for (o, x) in ga.data.iter_mut().zip(&g.data) {
                        *o += k * x;
                    }
                });
            }
            Op::AddScalar(a) => self.accumulate(grads, *a, |ga| add_assign(&mut ga.data, &g.data)),
            Op::Tanh(a) => self.accumulate(grads, *a, |ga| {
                for ((o, x), t) in ga.data.iter_mut().zip(&g.data).zip(&y.data) {
                    *o += x * (1.0 - t * t);
                }
            }),
            Op::Exp(a) => self.accumulate(grads, *a, |ga| {
                for ((o, x), e) in ga.data.iter_mut().zip(&g.data).zip(&y.data) {
                    *o += x * e;
                }
            }),
            Op::Gelu(a) => {
                let va = &self.value(*a).data;
                self.accumulate(grads, *a, |ga| {
                    for ((o, x), v) in ga.data.iter_mut().zip(&g.data).zip(va) {
                        *o += x * gelu_grad(*v);
                    }
                })
            }
            Op::Square(a) => {
                let va = &self.value(*a).data;
                self.accumulate(grads, *a, |ga| {
                    for ((o, x), v) in ga.data.iter_mut().zip(&g.data).zip(va) {
                        *o += 2.0 * x * v;
                    }
                })
            }
            Op::Min(a, b) => {
                let (va, vb) = (&self.value(*a).data, &self.value(*b).data);
                self.accumulate(grads, *a, |ga| {
                    for i in 0..ga.data.len() {
                        if va[i] <= vb[i] {
                            ga.data[i] += g.data[i];
                        }
                    }
                });
                self.accumulate(grads, *b, |gb| {
                    for i in 0..gb.data.len() {
                        if va[i] > vb[i] {
                            gb.data[i] += g.data[i];
                        }
                    }
                });
            }
            Op::Clamp(a, lo, hi) => {
                let va = &self.value(*a).data;
                self.accumulate(grads, *a, |ga| {
                    for i in 0..ga.data.len() {
                        if va[i] >= *lo && va[i] <= *hi {
                            ga.data[i] += g.data[i];
                        }
                    }
                })
            }
            Op::SumAll(a) => {
                let s = g.data[0];
                self.accumulate(grads, *a, |ga| ga.data.iter_mut().for_each(|o| *o += s));
            }
            Op::SumCols(a) => {
                let m = self.shape(*a).1;
                self.accumulate(grads, *a, |ga| {
                    for (i, o) in ga.data.iter_mut().enumerate() {
                        *o += g.data[i / m];
                    }
                })
            }
            Op::SoftmaxRows(a) => {
                let m = y.cols;
                self.accumulate(grads, *a, |ga| {
                    for i in 0..y.rows {
                        let yr = &y.data[i * m..(i + 1) * m];
                        let gr = &g.data[i * m..(i + 1) * m];
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for j in 0..m {
                            ga.data[i * m + j] += yr[j] * (gr[j] - dot);
                        }
                    }
                })
            }
            Op::LogSoftmaxRows(a) => {
                let m = y.cols;
                self.accumulate(grads, *a, |ga| {
                    for i in 0..y.rows {
                        let yr = &y.data[i * m..(i + 1) * m];
                        let gr = &g.data[i * m..(i + 1) * m];
                        let total: f64 = gr.iter().sum();
                        for j in 0..m {
                            ga.data[i * m + j] += gr[j] - yr[j].exp() * total;
                        }
                    }
                })
            }
            Op::LayerNorm(a, inv_std) => {
                let m = y.cols;
                self.accumulate(grads, *a, |ga| {
                    for i in 0..y.rows {
                        let yr = &y.data[i * m..(i + 1) * m];
                        let gr = &g.data[i * m..(i + 1) * m];
                        let mean_g = gr.iter().sum::<f64>() / m as f64;
                        let mean_gy = gr.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() / m as f64;
                        for j in 0..m {
                            ga.data[i * m + j] += inv_std[i] * (gr[j] - mean_g - yr[j] * mean_gy);
                        }
                    }
                })
            }
            Op::SliceCols(a, start) => {
                let m = self.shape(*a).1;
                let len = y.cols;
                self.accumulate(grads, *a, |ga| {
                    for i in 0..y.rows {
                        add_assign(&mut ga.data[i * m + start..i * m + start + len], &g.data[i * len..(i + 1) * len]);
                    }
                })
            }
            Op::ConcatCols(parts) => {
                let total = y.cols;
                let mut offset = 0;
                for &p in parts {
                    let pm = self.shape(p).1;
                    self.accumulate(grads, p, |gp| {
                        for i in 0..y.rows {
                            add_assign(
                                &mut gp.data[i * pm..(i + 1) * pm],
                                &g.data[i * total + offset..i * total + offset + pm],
                            );
                        }
                    });
                    offset += pm;
                }
            }
            Op::GatherRows(a, idx) => {
                let m = y.cols;
                self.accumulate(grads, *a, |ga| {
                    for (r, &i) in idx.iter().enumerate() {
                        add_assign(&mut ga.data[i * m..(i + 1) * m], &g.data[r * m..(r + 1) * m]);
                    }
                })
            }
            Op::Interleave(parts) => {
                let k = parts.len();
                let m = y.cols;
                for (j, &p) in parts.iter().enumerate() {
                    let n = self.shape(p).0;
                    self.accumulate(grads, p, |gp| {
                        for i in 0..n {
                            let r = k * i + j;
                            add_assign(&mut gp.data[i * m..(i + 1) * m], &g.data[r * m..(r + 1) * m]);
                        }
                    });
                }
            }
            Op::Transpose(a) => {
                let (n, m) = self.shape(*a);
                self.accumulate(grads, *a, |ga| {
                    for i in 0..n {
                        for j in 0..m {
                            ga.data[i * m + j] += g.data[j * n + i];
                        }
                    }
                })
            }
        }
    }
}

fn add_assign(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Shapes of a flat parameter vector's blocks, in storage order.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct ParamLayout {
    pub shapes: Vec<(usize, usize)>,
}

impl ParamLayout {
    pub fn push(&mut self, rows: usize, cols: usize) -> usize {
        self.shapes.push((rows, cols));
        self.shapes.len() - 1
    }

    pub fn total(&self) -> usize {
        self.shapes.iter().map(|(r, c)| r * c).sum()
    }

    /// Creates one graph leaf per block from `flat`.
    pub fn bind(&self, graph: &mut Graph, flat: &[f64]) -> Vec<Var> {
        let mut offset = 0;
        self.shapes
            .iter()
            .map(|&(r, c)| {
                let t = Tensor::from_vec(r, c, flat[offset..offset + r * c].to_vec());
                offset += r * c;
                graph.param(t)
            })
            .collect()
    }

    /// Concatenates block gradients back into flat order.
    pub fn collect(&self, grads: &Gradients, vars: &[Var]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.total());
        for (&(r, c), &v) in self.shapes.iter().zip(vars) {
            match grads.get(v) {
                Some(g) => out.extend_from_slice(&g.data),
                None => out.extend(core::iter::repeat_n(0.0, r * c)),
            }
        }
        out
    }
}

/// Central differences of `f` at `x` with step `h`.
pub fn numeric_gradient<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `|a - n| / (|a| + |n|)` in the Euclidean norm; 0 when both vanish.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut analytic.iter().zip(numeric).map(|(a, n)| a - n));
    let scale = norm(&mut analytic.iter().copied()) + norm(&mut numeric.iter().copied());
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}
