//! Reverse-mode differentiation over a linear record of operations.
//!
//! Values are appended in evaluation order, so node indices are already a
//! topological order; [`Tape::backward`] walks them once in reverse.

use std::borrow::Cow;

use super::tensor::{
    axis_strides, dot, matmul_acc, matmul_at_acc, matmul_bt_acc, Tensor, NORM_GUARD,
};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Elementwise nonlinearities.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Unary {
    Square,
    Relu,
    Recip,
    /// `ln(|x| + eps)`
    LogAbs(f64),
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Affine { x: Var, scale: f64 },
    Unary(Var, Unary),
    Sum(Var),
    MaxElem { x: Var, argmax: usize },
    L2Norm(Var),
    RowNorms(Var),
    ScaleRows(Var, Var),
    SquashRows(Var),
    Softmax { x: Var, axis: usize },
    Standardize { x: Var, eps: f64 },
    CapsuleVotes(Var, Var),
    WeightedVotes(Var, Var),
    Agreement(Var, Var),
    ConcatRows(Vec<Var>),
    Reshape(Var),
}

struct Node<'a> {
    value: Cow<'a, Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Single-threaded operation record. Leaves may borrow their values, so
/// model parameters are bound without copying.
#[derive(Default)]
pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
}

/// Gradients of a scalar with respect to every trainable leaf.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn wrt(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor> {
        self.grads.get_mut(var.0).and_then(Option::take)
    }
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::Shape {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value: Cow::Owned(value),
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn leaf(&mut self, value: Cow<'a, Tensor>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(Cow::Owned(value), false)
    }

    pub fn constant_ref(&mut self, value: &'a Tensor) -> Var {
        self.leaf(Cow::Borrowed(value), false)
    }

    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(Cow::Owned(value), true)
    }

    pub fn param_ref(&mut self, value: &'a Tensor) -> Var {
        self.leaf(Cow::Borrowed(value), true)
    }

    /// Copies the current value of `x` into a fresh constant, cutting the gradient path.
    pub fn detach(&mut self, x: Var) -> Var {
        let value = self.value(x).clone();
        self.constant(value)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = super::tensor::matmul(self.value(a), self.value(b))?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    fn zip_same(&self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err(op, ta, tb));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same("add", a, b, |x, y| x + y)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same("sub", a, b, |x, y| x - y)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same("mul", a, b, |x, y| x * y)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    /// `scale · x + shift`, elementwise.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        let t = self.value(x);
        let data = t.data().iter().map(|&v| scale * v + shift).collect();
        let out = Tensor::new(t.shape().to_vec(), data).expect("same shape");
        let rg = self.rg(&[x]);
        self.push(out, Op::Affine { x, scale }, rg)
    }

    pub fn unary(&mut self, x: Var, kind: Unary) -> Var {
        let t = self.value(x);
        let data = t
            .data()
            .iter()
            .map(|&v| match kind {
                Unary::Square => v * v,
                Unary::Relu => v.max(0.0),
                Unary::Recip => 1.0 / v,
                Unary::LogAbs(eps) => (v.abs() + eps).ln(),
            })
            .collect();
        let out = Tensor::new(t.shape().to_vec(), data).expect("same shape");
        let rg = self.rg(&[x]);
        self.push(out, Op::Unary(x, kind), rg)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).data().iter().sum();
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(total), Op::Sum(x), rg)
    }

    /// Largest element; ties resolve to the lowest index.
    pub fn max_elem(&mut self, x: Var) -> Var {
        let data = self.value(x).data();
        let mut argmax = 0;
        for (i, &v) in data.iter().enumerate() {
            if v > data[argmax] {
                argmax = i;
            }
        }
        let best = data[argmax];
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(best), Op::MaxElem { x, argmax }, rg)
    }

    /// Euclidean norm of all elements. The gradient is zero below [`NORM_GUARD`].
    pub fn l2_norm(&mut self, x: Var) -> Var {
        let n = dot(self.value(x).data(), self.value(x).data()).sqrt();
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(n), Op::L2Norm(x), rg)
    }

    /// Norm of each row of a matrix, guarded like [`Tape::l2_norm`].
    pub fn row_norms(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let (rows, _) = t.dims2()?;
        let norms = (0..rows).map(|i| dot(t.row(i), t.row(i)).sqrt()).collect();
        let rg = self.rg(&[x]);
        Ok(self.push(Tensor::vector(norms), Op::RowNorms(x), rg))
    }

    /// Multiplies row `i` of `x` by `s[i]`.
    pub fn scale_rows(&mut self, x: Var, s: Var) -> Result<Var> {
        let (tx, ts) = (self.value(x), self.value(s));
        let (rows, cols) = tx.dims2()?;
        if ts.len() != rows {
            return Err(shape_err("scale_rows", tx, ts));
        }
        let mut data = tx.data().to_vec();
        for (i, chunk) in data.chunks_mut(cols).enumerate() {
            let f = ts.data()[i];
            chunk.iter_mut().for_each(|v| *v *= f);
        }
        let out = Tensor::matrix(rows, cols, data);
        let rg = self.rg(&[x, s]);
        Ok(self.push(out, Op::ScaleRows(x, s), rg))
    }

    /// Row-wise capsule squash `v = (‖s‖² / (1 + ‖s‖²)) · s / ‖s‖`; rows
    /// with norm below [`NORM_GUARD`] map to zero.
    pub fn squash_rows(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let (rows, cols) = t.dims2()?;
        let mut data = t.data().to_vec();
        for chunk in data.chunks_mut(cols) {
            let f = squash_factor(dot(chunk, chunk).sqrt());
            chunk.iter_mut().for_each(|v| *v *= f);
        }
        let out = Tensor::matrix(rows, cols, data);
        let rg = self.rg(&[x]);
        Ok(self.push(out, Op::SquashRows(x), rg))
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let out = super::tensor::softmax(self.value(x), axis)?;
        let rg = self.rg(&[x]);
        Ok(self.push(out, Op::Softmax { x, axis }, rg))
    }

    /// `(x − mean) / (std + eps)` over all elements, population std.
    pub fn standardize(&mut self, x: Var, eps: f64) -> Var {
        let t = self.value(x);
        let (mean, std) = mean_std(t.data());
        let data = t.data().iter().map(|&v| (v - mean) / (std + eps)).collect();
        let out = Tensor::new(t.shape().to_vec(), data).expect("same shape");
        let rg = self.rg(&[x]);
        self.push(out, Op::Standardize { x, eps }, rg)
    }

    /// Per-pair capsule predictions: `u[i,k,:] = c[i,:] · w[i,k,:,:]`.
    ///
    /// `c` is `M × di`, `w` is `M × K × di × dk`, the result is `M × K × dk`.
    pub fn capsule_votes(&mut self, c: Var, w: Var) -> Result<Var> {
        let (tc, tw) = (self.value(c), self.value(w));
        let (m, di) = tc.dims2()?;
        let (k, dk) = match tw.shape() {
            [wm, k, wdi, dk] if *wm == m && *wdi == di => (*k, *dk),
            _ => return Err(shape_err("capsule_votes", tc, tw)),
        };
        let mut out = vec![0.0; m * k * dk];
        for i in 0..m {
            for kk in 0..k {
                let w_off = (i * k + kk) * di * dk;
                let o_off = (i * k + kk) * dk;
                matmul_acc(
                    tc.row(i),
                    &tw.data()[w_off..w_off + di * dk],
                    &mut out[o_off..o_off + dk],
                    1,
                    di,
                    dk,
                );
            }
        }
        let out = Tensor::new(vec![m, k, dk], out)?;
        let rg = self.rg(&[c, w]);
        Ok(self.push(out, Op::CapsuleVotes(c, w), rg))
    }

    /// Coupling-weighted vote sum: `s[k,:] = Σ_i alpha[i,k] · u[i,k,:]`.
    pub fn weighted_votes(&mut self, alpha: Var, u: Var) -> Result<Var> {
        let (ta, tu) = (self.value(alpha), self.value(u));
        let (m, k, dk) = votes_dims(tu)?;
        if ta.shape() != [m, k] {
            return Err(shape_err("weighted_votes", ta, tu));
        }
        let mut out = vec![0.0; k * dk];
        for i in 0..m {
            for kk in 0..k {
                let a = ta.data()[i * k + kk];
                let src = &tu.data()[(i * k + kk) * dk..(i * k + kk + 1) * dk];
                for (o, &x) in out[kk * dk..(kk + 1) * dk].iter_mut().zip(src) {
                    *o += a * x;
                }
            }
        }
        let out = Tensor::matrix(k, dk, out);
        let rg = self.rg(&[alpha, u]);
        Ok(self.push(out, Op::WeightedVotes(alpha, u), rg))
    }

    /// Prediction/output agreement: `g[i,k] = ⟨u[i,k,:], v[k,:]⟩`.
    pub fn agreement(&mut self, u: Var, v: Var) -> Result<Var> {
        let (tu, tv) = (self.value(u), self.value(v));
        let (m, k, dk) = votes_dims(tu)?;
        if tv.shape() != [k, dk] {
            return Err(shape_err("agreement", tu, tv));
        }
        let mut out = vec![0.0; m * k];
        for i in 0..m {
            for kk in 0..k {
                let src = &tu.data()[(i * k + kk) * dk..(i * k + kk + 1) * dk];
                out[i * k + kk] = dot(src, tv.row(kk));
            }
        }
        let out = Tensor::matrix(m, k, out);
        let rg = self.rg(&[u, v]);
        Ok(self.push(out, Op::Agreement(u, v), rg))
    }

    /// Stacks matrices with equal column counts vertically.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::contract("concat_rows of nothing"))?;
        let (_, cols) = self.value(*first).dims2()?;
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let t = self.value(p);
            let (r, c) = t.dims2()?;
            if c != cols {
                return Err(shape_err("concat_rows", self.value(*first), t));
            }
            rows += r;
            data.extend_from_slice(t.data());
        }
        let out = Tensor::matrix(rows, cols, data);
        let rg = self.rg(parts);
        Ok(self.push(out, Op::ConcatRows(parts.to_vec()), rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).clone().reshape(shape)?;
        let rg = self.rg(&[x]);
        Ok(self.push(out, Op::Reshape(x), rg))
    }

    /// Accumulates `d loss / d leaf` for every leaf created with `param`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let loss_value = self.value(loss);
        if !loss_value.is_scalar() {
            return Err(Error::contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                loss_value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        let mut out: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(vec![1.0]);
        }

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {
                    if node.requires_grad {
                        out[idx] = Some(Tensor::new(node.value.shape().to_vec(), g)?);
                    }
                }
                op => self.propagate(op, &node.value, &g, &mut grads),
            }
        }
        // Trainable leaves the loss does not reach get an explicit zero gradient.
        for (idx, node) in self.nodes.iter().enumerate() {
            if matches!(node.op, Op::Leaf) && node.requires_grad && out[idx].is_none() {
                out[idx] = Some(Tensor::zeros(node.value.shape()));
            }
        }
        Ok(Gradients { grads: out })
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], var: Var, f: impl FnOnce(&mut [f64])) {
        if !self.nodes[var.0].requires_grad {
            return;
        }
        let slot = grads[var.0].get_or_insert_with(|| vec![0.0; self.nodes[var.0].value.len()]);
        f(slot);
    }

    fn propagate(&self, op: &Op, out: &Tensor, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        match *op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(a), self.value(b));
                let (m, k) = ta.dims2().expect("matrix");
                let (_, n) = tb.dims2().expect("matrix");
                self.accumulate(grads, a, |ga| matmul_bt_acc(g, tb.data(), ga, m, n, k));
                self.accumulate(grads, b, |gb| matmul_at_acc(ta.data(), g, gb, m, k, n));
            }
            Op::Add(a, b) => {
                self.accumulate(grads, a, |ga| add_into(ga, g, 1.0));
                self.accumulate(grads, b, |gb| add_into(gb, g, 1.0));
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, a, |ga| add_into(ga, g, 1.0));
                self.accumulate(grads, b, |gb| add_into(gb, g, -1.0));
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(a), self.value(b));
                self.accumulate(grads, a, |ga| {
                    for ((d, &gi), &bv) in ga.iter_mut().zip(g).zip(tb.data()) {
                        *d += gi * bv;
                    }
                });
                self.accumulate(grads, b, |gb| {
                    for ((d, &gi), &av) in gb.iter_mut().zip(g).zip(ta.data()) {
                        *d += gi * av;
                    }
                });
            }
            Op::Affine { x, scale } => {
                self.accumulate(grads, x, |gx| add_into(gx, g, scale));
            }
            Op::Unary(x, kind) => {
                let tx = self.value(x);
                self.accumulate(grads, x, |gx| {
                    for (i, d) in gx.iter_mut().enumerate() {
                        let v = tx.data()[i];
                        let deriv = match kind {
                            Unary::Square => 2.0 * v,
                            Unary::Relu => {
                                if v > 0.0 {
                                    1.0
                                } else {
                                    0.0
                                }
                            }
                            Unary::Recip => -1.0 / (v * v),
                            Unary::LogAbs(eps) => {
                                if v == 0.0 {
                                    0.0
                                } else {
                                    v.signum() / (v.abs() + eps)
                                }
                            }
                        };
                        *d += g[i] * deriv;
                    }
                });
            }
            Op::Sum(x) => {
                self.accumulate(grads, x, |gx| gx.iter_mut().for_each(|d| *d += g[0]));
            }
            Op::MaxElem { x, argmax } => {
                self.accumulate(grads, x, |gx| gx[argmax] += g[0]);
            }
            Op::L2Norm(x) => {
                let tx = self.value(x);
                let n = out.item();
                if n >= NORM_GUARD {
                    self.accumulate(grads, x, |gx| add_into(gx, tx.data(), g[0] / n));
                }
            }
            Op::RowNorms(x) => {
                let tx = self.value(x);
                let (rows, cols) = tx.dims2().expect("matrix");
                self.accumulate(grads, x, |gx| {
                    for i in 0..rows {
                        let n = out.data()[i];
                        if n < NORM_GUARD {
                            continue;
                        }
                        let f = g[i] / n;
                        add_into(&mut gx[i * cols..(i + 1) * cols], tx.row(i), f);
                    }
                });
            }
            Op::ScaleRows(x, s) => {
                let (tx, ts) = (self.value(x), self.value(s));
                let (rows, cols) = tx.dims2().expect("matrix");
                self.accumulate(grads, x, |gx| {
                    for i in 0..rows {
                        let f = ts.data()[i];
                        add_into(&mut gx[i * cols..(i + 1) * cols], &g[i * cols..(i + 1) * cols], f);
                    }
                });
                self.accumulate(grads, s, |gs| {
                    for i in 0..rows {
                        gs[i] += dot(&g[i * cols..(i + 1) * cols], tx.row(i));
                    }
                });
            }
            Op::SquashRows(x) => {
                let tx = self.value(x);
                let (rows, cols) = tx.dims2().expect("matrix");
                self.accumulate(grads, x, |gx| {
                    for i in 0..rows {
                        let s = tx.row(i);
                        let n = dot(s, s).sqrt();
                        if n < NORM_GUARD {
                            continue;
                        }
                        let gi = &g[i * cols..(i + 1) * cols];
                        let n2 = n * n;
                        // d/dn [n / (1 + n²)] = (1 − n²) / (1 + n²)²
                        let df = (1.0 - n2) / ((1.0 + n2) * (1.0 + n2));
                        let radial = df / n * dot(gi, s);
                        let dst = &mut gx[i * cols..(i + 1) * cols];
                        add_into(dst, gi, squash_factor(n));
                        add_into(dst, s, radial);
                    }
                });
            }
            Op::Softmax { x, axis } => {
                let (outer, len, inner) = axis_strides(out.shape(), axis);
                let y = out.data();
                self.accumulate(grads, x, |gx| {
                    for o in 0..outer {
                        for j in 0..inner {
                            let idx = |t: usize| (o * len + t) * inner + j;
                            let mut inner_sum = 0.0;
                            for t in 0..len {
                                inner_sum += g[idx(t)] * y[idx(t)];
                            }
                            for t in 0..len {
                                gx[idx(t)] += y[idx(t)] * (g[idx(t)] - inner_sum);
                            }
                        }
                    }
                });
            }
            Op::Standardize { x, eps } => {
                let tx = self.value(x);
                let n = tx.len() as f64;
                let (mean, std) = mean_std(tx.data());
                let denom = std + eps;
                let g_mean = g.iter().sum::<f64>() / n;
                let g_dot_centered: f64 = g.iter().zip(tx.data()).map(|(gi, xi)| gi * (xi - mean)).sum();
                let std_coef = if std > 0.0 {
                    g_dot_centered / (denom * denom * n * std)
                } else {
                    0.0
                };
                self.accumulate(grads, x, |gx| {
                    for (i, d) in gx.iter_mut().enumerate() {
                        let centered = tx.data()[i] - mean;
                        *d += (g[i] - g_mean) / denom - std_coef * centered;
                    }
                });
            }
            Op::CapsuleVotes(c, w) => {
                let (tc, tw) = (self.value(c), self.value(w));
                let (m, di) = tc.dims2().expect("matrix");
                let (k, dk) = (tw.shape()[1], tw.shape()[3]);
                self.accumulate(grads, c, |gc| {
                    for i in 0..m {
                        for kk in 0..k {
                            let w_off = (i * k + kk) * di * dk;
                            let g_off = (i * k + kk) * dk;
                            matmul_bt_acc(
                                &g[g_off..g_off + dk],
                                &tw.data()[w_off..w_off + di * dk],
                                &mut gc[i * di..(i + 1) * di],
                                1,
                                dk,
                                di,
                            );
                        }
                    }
                });
                self.accumulate(grads, w, |gw| {
                    for i in 0..m {
                        for kk in 0..k {
                            let w_off = (i * k + kk) * di * dk;
                            let g_off = (i * k + kk) * dk;
                            matmul_at_acc(
                                tc.row(i),
                                &g[g_off..g_off + dk],
                                &mut gw[w_off..w_off + di * dk],
                                1,
                                di,
                                dk,
                            );
                        }
                    }
                });
            }
            Op::WeightedVotes(alpha, u) => {
                let (ta, tu) = (self.value(alpha), self.value(u));
                let (m, k, dk) = votes_dims(tu).expect("votes");
                self.accumulate(grads, alpha, |ga| {
                    for i in 0..m {
                        for kk in 0..k {
                            let src = &tu.data()[(i * k + kk) * dk..(i * k + kk + 1) * dk];
                            ga[i * k + kk] += dot(src, &g[kk * dk..(kk + 1) * dk]);
                        }
                    }
                });
                self.accumulate(grads, u, |gu| {
                    for i in 0..m {
                        for kk in 0..k {
                            let a = ta.data()[i * k + kk];
                            let dst = &mut gu[(i * k + kk) * dk..(i * k + kk + 1) * dk];
                            add_into(dst, &g[kk * dk..(kk + 1) * dk], a);
                        }
                    }
                });
            }
            Op::Agreement(u, v) => {
                let (tu, tv) = (self.value(u), self.value(v));
                let (m, k, dk) = votes_dims(tu).expect("votes");
                self.accumulate(grads, u, |gu| {
                    for i in 0..m {
                        for kk in 0..k {
                            let dst = &mut gu[(i * k + kk) * dk..(i * k + kk + 1) * dk];
                            add_into(dst, tv.row(kk), g[i * k + kk]);
                        }
                    }
                });
                self.accumulate(grads, v, |gv| {
                    for i in 0..m {
                        for kk in 0..k {
                            let src = &tu.data()[(i * k + kk) * dk..(i * k + kk + 1) * dk];
                            add_into(&mut gv[kk * dk..(kk + 1) * dk], src, g[i * k + kk]);
                        }
                    }
                });
            }
            Op::ConcatRows(ref parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).len();
                    let slice = &g[offset..offset + len];
                    self.accumulate(grads, p, |gp| add_into(gp, slice, 1.0));
                    offset += len;
                }
            }
            Op::Reshape(x) => {
                self.accumulate(grads, x, |gx| add_into(gx, g, 1.0));
            }
        }
    }
}

/// Scale applied to a vector of norm `n` by the squash: `n / (1 + n²)`, zero below the guard.
pub fn squash_factor(n: f64) -> f64 {
    if n < NORM_GUARD {
        0.0
    } else {
        n / (1.0 + n * n)
    }
}

fn add_into(dst: &mut [f64], src: &[f64], scale: f64) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += scale * s;
    }
}

fn votes_dims(t: &Tensor) -> Result<(usize, usize, usize)> {
    match t.shape() {
        [m, k, dk] => Ok((*m, *k, *dk)),
        other => Err(Error::contract(format!(
            "expected a rank-3 vote tensor, got {other:?}"
        ))),
    }
}

pub(crate) fn mean_std(data: &[f64]) -> (f64, f64) {
    let n = data.len() as f64;
    let mean = data.iter().sum::<f64>() / n;
    let var = data.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}
