//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! Every primitive appends a node to the tape. Nodes are stored in creation
//! order, which is already a topological order, so the backward pass is a
//! single reverse sweep. Operations whose operands are all constants are
//! stored as constants and never visited by `backward`.

use super::tensor::Tensor;
use crate::error::{Error, Result};

const LAYER_NORM_EPS: f64 = 1e-5;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Transpose(Var),
    Softmax(Var),
    LogSoftmax(Var),
    Relu(Var),
    Abs(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        rstd: Vec<f64>,
    },
    Concat {
        inputs: Vec<Var>,
        axis: usize,
    },
    Slice {
        x: Var,
        axis: usize,
        start: usize,
    },
    Sum(Var),
    Mean(Var),
    RepeatRows(Var),
    MeanRows(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    requires_grad: bool,
    op: Op,
}

/// Outcome flag of a backward pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradStatus {
    Ok,
    /// The loss does not depend on any differentiable leaf; all gradients are zero.
    Detached,
}

/// Gradients of a scalar loss with respect to every differentiable leaf.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    status: GradStatus,
    visited_ops: usize,
}

impl Gradients {
    /// Gradient for `var`; `None` if `var` is not a differentiable leaf.
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    /// Moves the gradient for `var` out of the set.
    pub fn take(&mut self, var: Var) -> Option<Tensor> {
        self.grads.get_mut(var.0).and_then(Option::take)
    }

    pub fn status(&self) -> GradStatus {
        self.status
    }

    /// Number of recorded operations the backward sweep propagated through.
    pub fn visited_ops(&self) -> usize {
        self.visited_ops
    }
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::Shape {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
}

/// (outer, axis_len, inner) decomposition of `shape` around `axis`.
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Clears all nodes so the tape can be reused for a fresh graph.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.consumed = false;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of recorded differentiable operations (excludes leaves and constants).
    pub fn recorded_ops(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| n.requires_grad && !matches!(n.op, Op::Leaf))
            .count()
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    /// Differentiable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        let op = if requires_grad { op } else { Op::Leaf };
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, k) = ta.dims2("matmul")?;
        let (k2, n) = tb.dims2("matmul")?;
        if k != k2 {
            return Err(shape_err("matmul", ta, tb));
        }
        let (ad, bd) = (ta.data(), tb.data());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let s = ad[i * k + p];
                for (o, &bv) in row.iter_mut().zip(&bd[p * n..(p + 1) * n]) {
                    *o += s * bv;
                }
            }
        }
        let value = Tensor::new(vec![m, n], out)?;
        Ok(self.push(value, Op::MatMul(a, b), &[a, b]))
    }

    fn zip_same(
        &mut self,
        op: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err(op, ta, tb));
        }
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor::new(ta.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.zip_same("add", a, b, |x, y| x + y)?;
        Ok(self.push(v, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.zip_same("sub", a, b, |x, y| x - y)?;
        Ok(self.push(v, Op::Sub(a, b), &[a, b]))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.zip_same("mul", a, b, |x, y| x * y)?;
        Ok(self.push(v, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let ta = self.value(a);
        let data = ta.data().iter().map(|x| x * c).collect();
        let v = Tensor::new(ta.shape().to_vec(), data).expect("shape preserved");
        self.push(v, Op::Scale(a, c), &[a])
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        let (r, c) = ta.dims2("transpose")?;
        let d = ta.data();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = d[i * c + j];
            }
        }
        let v = Tensor::new(vec![c, r], out)?;
        Ok(self.push(v, Op::Transpose(a), &[a]))
    }

    pub fn softmax_lastdim(&mut self, a: Var) -> Var {
        let ta = self.value(a);
        let c = ta.last_dim();
        let mut out = ta.data().to_vec();
        for row in out.chunks_mut(c) {
            let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let mut total = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            for v in row.iter_mut() {
                *v /= total;
            }
        }
        let v = Tensor::new(ta.shape().to_vec(), out).expect("shape preserved");
        self.push(v, Op::Softmax(a), &[a])
    }

    /// Log-softmax over the last dimension in log-sum-exp form.
    pub fn log_softmax_lastdim(&mut self, a: Var) -> Var {
        let ta = self.value(a);
        let c = ta.last_dim();
        let mut out = ta.data().to_vec();
        for row in out.chunks_mut(c) {
            let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            for v in row.iter_mut() {
                *v -= lse;
            }
        }
        let v = Tensor::new(ta.shape().to_vec(), out).expect("shape preserved");
        self.push(v, Op::LogSoftmax(a), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let ta = self.value(a);
        let data = ta.data().iter().map(|&x| x.max(0.0)).collect();
        let v = Tensor::new(ta.shape().to_vec(), data).expect("shape preserved");
        self.push(v, Op::Relu(a), &[a])
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let ta = self.value(a);
        let data = ta.data().iter().map(|x| x.abs()).collect();
        let v = Tensor::new(ta.shape().to_vec(), data).expect("shape preserved");
        self.push(v, Op::Abs(a), &[a])
    }

    /// Normalizes each row over the last dimension, then applies `gamma` and `beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let (tx, tg, tb) = (self.value(x), self.value(gamma), self.value(beta));
        let c = tx.last_dim();
        if tg.shape() != [c] {
            return Err(shape_err("layer_norm", tx, tg));
        }
        if tb.shape() != [c] {
            return Err(shape_err("layer_norm", tx, tb));
        }
        let rows = tx.len() / c;
        let mut xhat = vec![0.0; tx.len()];
        let mut rstd = vec![0.0; rows];
        let mut out = vec![0.0; tx.len()];
        for r in 0..rows {
            let row = &tx.data()[r * c..(r + 1) * c];
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / c as f64;
            let rs = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            rstd[r] = rs;
            for j in 0..c {
                let h = (row[j] - mean) * rs;
                xhat[r * c + j] = h;
                out[r * c + j] = h * tg.data()[j] + tb.data()[j];
            }
        }
        let v = Tensor::new(tx.shape().to_vec(), out)?;
        Ok(self.push(
            v,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            },
            &[x, gamma, beta],
        ))
    }

    /// Concatenates along `axis`; all other dimensions must agree.
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = inputs
            .first()
            .map(|&v| self.value(v))
            .ok_or_else(|| Error::InvalidTensor("concat of zero tensors".into()))?;
        if axis >= first.rank() {
            return Err(Error::InvalidTensor(format!(
                "concat axis {axis} out of range for shape {:?}",
                first.shape()
            )));
        }
        let mut shape = first.shape().to_vec();
        shape[axis] = 0;
        for &v in inputs {
            let t = self.value(v);
            let compatible = t.rank() == first.rank()
                && t.shape()
                    .iter()
                    .zip(first.shape())
                    .enumerate()
                    .all(|(d, (a, b))| d == axis || a == b);
            if !compatible {
                return Err(shape_err("concat", first, t));
            }
            shape[axis] += t.shape()[axis];
        }
        let (outer, total, inner) = split_axis(&shape, axis);
        let mut out = vec![0.0; outer * total * inner];
        let mut offset = 0;
        for &v in inputs {
            let t = self.value(v);
            let len = t.shape()[axis];
            for o in 0..outer {
                let src = &t.data()[o * len * inner..(o + 1) * len * inner];
                let dst = (o * total + offset) * inner;
                out[dst..dst + len * inner].copy_from_slice(src);
            }
            offset += len;
        }
        let v = Tensor::new(shape, out)?;
        Ok(self.push(
            v,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            inputs,
        ))
    }

    /// Half-open range `start..end` along `axis`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, end: usize) -> Result<Var> {
        let t = self.value(x);
        if axis >= t.rank() || start >= end || end > t.shape()[axis] {
            return Err(Error::InvalidTensor(format!(
                "slice {start}..{end} on axis {axis} invalid for shape {:?}",
                t.shape()
            )));
        }
        let (outer, len, inner) = split_axis(t.shape(), axis);
        let width = end - start;
        let mut out = Vec::with_capacity(outer * width * inner);
        for o in 0..outer {
            let base = (o * len + start) * inner;
            out.extend_from_slice(&t.data()[base..base + width * inner]);
        }
        let mut shape = t.shape().to_vec();
        shape[axis] = width;
        let v = Tensor::new(shape, out)?;
        Ok(self.push(v, Op::Slice { x, axis, start }, &[x]))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let s = t.data().iter().sum::<f64>() / t.len() as f64;
        self.push(Tensor::scalar(s), Op::Mean(a), &[a])
    }

    /// Stacks a vector `[c]` or row `[1, c]` into `n` identical rows `[n, c]`.
    pub fn repeat_rows(&mut self, a: Var, n: usize) -> Result<Var> {
        let t = self.value(a);
        let is_row = t.rank() == 1 || (t.rank() == 2 && t.shape()[0] == 1);
        if !is_row || n == 0 {
            return Err(Error::InvalidTensor(format!(
                "repeat_rows needs a vector or single row and n > 0, got {:?} x {n}",
                t.shape()
            )));
        }
        let c = t.len();
        let out = t.data().repeat(n);
        let v = Tensor::new(vec![n, c], out)?;
        Ok(self.push(v, Op::RepeatRows(a), &[a]))
    }

    /// Column means of a matrix `[r, c]` as a row `[1, c]`.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let (r, c) = t.dims2("mean_rows")?;
        let mut out = vec![0.0; c];
        for row in t.data().chunks(c) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        for o in &mut out {
            *o /= r as f64;
        }
        let v = Tensor::new(vec![1, c], out)?;
        Ok(self.push(v, Op::MeanRows(a), &[a]))
    }

    /// Propagates d(loss)/d(node) back to every differentiable leaf.
    ///
    /// A tape may be backpropagated once; call [`Tape::reset`] before reuse.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.consumed {
            return Err(Error::Backward(
                "tape already backpropagated; reset before reuse".into(),
            ));
        }
        if self.nodes.is_empty() {
            return Err(Error::Backward("empty tape".into()));
        }
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(Error::Backward(format!(
                "loss must be scalar, got shape {:?}",
                lv.shape()
            )));
        }
        self.consumed = true;

        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; n];
        let mut visited_ops = 0;
        let status = if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(vec![1.0]);
            GradStatus::Ok
        } else {
            GradStatus::Detached
        };

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            visited_ops += 1;
            self.propagate(idx, &g, &mut grads);
        }

        let grads = self
            .nodes
            .iter()
            .zip(grads)
            .map(|(node, g)| {
                (node.requires_grad && matches!(node.op, Op::Leaf)).then(|| {
                    let data = g.unwrap_or_else(|| vec![0.0; node.value.len()]);
                    Tensor::new(node.value.shape().to_vec(), data).expect("grad matches value")
                })
            })
            .collect();
        Ok(Gradients {
            grads,
            status,
            visited_ops,
        })
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], v: Var, delta: Vec<f64>) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(g) => {
                for (a, d) in g.iter_mut().zip(delta) {
                    *a += d;
                }
            }
            slot @ None => *slot = Some(delta),
        }
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf => {}
            &Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(a), self.value(b));
                let (m, k) = (ta.shape()[0], ta.shape()[1]);
                let n = tb.shape()[1];
                if self.wants(a) {
                    // dA = G Bᵀ
                    let bd = tb.data();
                    let mut da = vec![0.0; m * k];
                    for i in 0..m {
                        let gr = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            da[i * k + p] = gr
                                .iter()
                                .zip(&bd[p * n..(p + 1) * n])
                                .map(|(x, y)| x * y)
                                .sum();
                        }
                    }
                    self.accumulate(grads, a, da);
                }
                if self.wants(b) {
                    // dB = Aᵀ G
                    let ad = ta.data();
                    let mut db = vec![0.0; k * n];
                    for i in 0..m {
                        let gr = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let s = ad[i * k + p];
                            for (o, gv) in db[p * n..(p + 1) * n].iter_mut().zip(gr) {
                                *o += s * gv;
                            }
                        }
                    }
                    self.accumulate(grads, b, db);
                }
            }
            &Op::Add(a, b) => {
                self.accumulate(grads, a, g.to_vec());
                self.accumulate(grads, b, g.to_vec());
            }
            &Op::Sub(a, b) => {
                self.accumulate(grads, a, g.to_vec());
                self.accumulate(grads, b, g.iter().map(|v| -v).collect());
            }
            &Op::Mul(a, b) => {
                let (ta, tb) = (self.value(a), self.value(b));
                if self.wants(a) {
                    let d = g.iter().zip(tb.data()).map(|(x, y)| x * y).collect();
                    self.accumulate(grads, a, d);
                }
                if self.wants(b) {
                    let d = g.iter().zip(ta.data()).map(|(x, y)| x * y).collect();
                    self.accumulate(grads, b, d);
                }
            }
            &Op::Scale(a, c) => {
                self.accumulate(grads, a, g.iter().map(|v| v * c).collect());
            }
            &Op::Transpose(a) => {
                let (r, c) = (node.value.shape()[0], node.value.shape()[1]);
                let mut d = vec![0.0; r * c];
                for i in 0..r {
                    for j in 0..c {
                        d[j * r + i] = g[i * c + j];
                    }
                }
                self.accumulate(grads, a, d);
            }
            &Op::Softmax(a) => {
                let y = node.value.data();
                let c = node.value.last_dim();
                let mut d = vec![0.0; y.len()];
                for ((dr, yr), gr) in d.chunks_mut(c).zip(y.chunks(c)).zip(g.chunks(c)) {
                    let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                    for j in 0..c {
                        dr[j] = yr[j] * (gr[j] - dot);
                    }
                }
                self.accumulate(grads, a, d);
            }
            &Op::LogSoftmax(a) => {
                let y = node.value.data();
                let c = node.value.last_dim();
                let mut d = vec![0.0; y.len()];
                for ((dr, yr), gr) in d.chunks_mut(c).zip(y.chunks(c)).zip(g.chunks(c)) {
                    let total: f64 = gr.iter().sum();
                    for j in 0..c {
                        dr[j] = gr[j] - yr[j].exp() * total;
                    }
                }
                self.accumulate(grads, a, d);
            }
            &Op::Relu(a) => {
                let x = self.value(a).data();
                let d = g
                    .iter()
                    .zip(x)
                    .map(|(gv, &xv)| if xv > 0.0 { *gv } else { 0.0 })
                    .collect();
                self.accumulate(grads, a, d);
            }
            &Op::Abs(a) => {
                // subgradient 0 at 0
                let x = self.value(a).data();
                let d = g
                    .iter()
                    .zip(x)
                    .map(|(gv, &xv)| {
                        if xv > 0.0 {
                            *gv
                        } else if xv < 0.0 {
                            -gv
                        } else {
                            0.0
                        }
                    })
                    .collect();
                self.accumulate(grads, a, d);
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            } => {
                let c = node.value.last_dim();
                let gam = self.value(*gamma).data();
                if self.wants(*gamma) {
                    let mut dg = vec![0.0; c];
                    for (gr, hr) in g.chunks(c).zip(xhat.chunks(c)) {
                        for j in 0..c {
                            dg[j] += gr[j] * hr[j];
                        }
                    }
                    self.accumulate(grads, *gamma, dg);
                }
                if self.wants(*beta) {
                    let mut db = vec![0.0; c];
                    for gr in g.chunks(c) {
                        for j in 0..c {
                            db[j] += gr[j];
                        }
                    }
                    self.accumulate(grads, *beta, db);
                }
                if self.wants(*x) {
                    let mut dx = vec![0.0; g.len()];
                    for (r, ((dr, gr), hr)) in dx
                        .chunks_mut(c)
                        .zip(g.chunks(c))
                        .zip(xhat.chunks(c))
                        .enumerate()
                    {
                        let mut mean_dh = 0.0;
                        let mut mean_dh_h = 0.0;
                        for j in 0..c {
                            let dh = gr[j] * gam[j];
                            mean_dh += dh;
                            mean_dh_h += dh * hr[j];
                        }
                        mean_dh /= c as f64;
                        mean_dh_h /= c as f64;
                        for j in 0..c {
                            let dh = gr[j] * gam[j];
                            dr[j] = rstd[r] * (dh - mean_dh - hr[j] * mean_dh_h);
                        }
                    }
                    self.accumulate(grads, *x, dx);
                }
            }
            Op::Concat { inputs, axis } => {
                let (outer, total, inner) = split_axis(node.value.shape(), *axis);
                let mut offset = 0;
                for &v in inputs {
                    let len = self.value(v).shape()[*axis];
                    if self.wants(v) {
                        let mut d = Vec::with_capacity(outer * len * inner);
                        for o in 0..outer {
                            let src = (o * total + offset) * inner;
                            d.extend_from_slice(&g[src..src + len * inner]);
                        }
                        self.accumulate(grads, v, d);
                    }
                    offset += len;
                }
            }
            &Op::Slice { x, axis, start } => {
                let src = self.value(x);
                let (outer, len, inner) = split_axis(src.shape(), axis);
                let width = node.value.shape()[axis];
                let mut d = vec![0.0; src.len()];
                for o in 0..outer {
                    let dst = (o * len + start) * inner;
                    d[dst..dst + width * inner]
                        .copy_from_slice(&g[o * width * inner..(o + 1) * width * inner]);
                }
                self.accumulate(grads, x, d);
            }
            &Op::Sum(a) => {
                let n = self.value(a).len();
                self.accumulate(grads, a, vec![g[0]; n]);
            }
            &Op::Mean(a) => {
                let n = self.value(a).len();
                self.accumulate(grads, a, vec![g[0] / n as f64; n]);
            }
            &Op::RepeatRows(a) => {
                let c = self.value(a).len();
                let mut d = vec![0.0; c];
                for gr in g.chunks(c) {
                    for (o, v) in d.iter_mut().zip(gr) {
                        *o += v;
                    }
                }
                self.accumulate(grads, a, d);
            }
            &Op::MeanRows(a) => {
                let r = self.value(a).shape()[0];
                let d = g.iter().map(|v| v / r as f64).collect::<Vec<_>>().repeat(r);
                self.accumulate(grads, a, d);
            }
        }
    }
}
