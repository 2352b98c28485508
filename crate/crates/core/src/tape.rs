//! Reverse-mode differentiation over [`Tensor`] values.
//!
//! A [`Tape`] records each primitive as a node holding its forward value and
//! the operands needed by its backward rule. [`Tape::backward`] walks the
//! nodes in reverse recording order and writes `∂loss/∂node` into the grad
//! slot of every node that requires a gradient. Tapes are cleared explicitly
//! between training steps with [`Tape::clear`].

use std::sync::atomic::{AtomicU32, Ordering};

use crate::error::{Error, Result};
use crate::tensor::{matmul_kernel, matmul_nt_kernel, matmul_tn_kernel, split_axis, Tensor};

static NEXT_TAPE_ID: AtomicU32 = AtomicU32::new(1);

/// Handle to a node recorded on a particular [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    tape: u32,
    index: usize,
}

impl Var {
    pub fn index(&self) -> usize {
        self.index
    }
}

/// Elementwise binary operations accepted by [`Tape::elementwise`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementwiseOp {
    Add,
    Sub,
    Mul,
    Scale,
}

/// Right-hand operand of an elementwise op.
#[derive(Debug, Clone, Copy)]
pub enum Operand {
    Var(Var),
    Scalar(f64),
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Shift(Var),
    AddBias(Var, Var),
    /// Unary map with its local derivative captured at forward time.
    Map { input: Var, deriv: Vec<f64> },
    BatchNorm {
        input: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        frozen: bool,
    },
    Reshape(Var),
    MaxAxis { input: Var, argmax: Vec<usize> },
    MeanAxis { input: Var, outer: usize, len: usize, inner: usize },
    Sum(Var),
    SliceRows { input: Var, offset: usize },
    ConcatRows(Vec<Var>),
    Broadcast(Var),
    SoftmaxCrossEntropy { logits: Var, probs: Vec<f64>, labels: Vec<usize> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Batch statistics produced by a training-mode [`Tape::batch_norm`].
#[derive(Debug, Clone)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

#[derive(Debug)]
pub struct Tape {
    id: u32,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every recorded node. Vars issued before the clear become invalid.
    pub fn clear(&mut self) {
        self.nodes.clear();
        self.id = NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed);
    }

    /// Records a differentiable input.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        let mut value = value;
        value.zero_grad();
        self.push(value, Op::Leaf, true)
    }

    /// Records a non-differentiable input.
    pub fn constant(&mut self, value: Tensor) -> Var {
        let mut value = value;
        value.zero_grad();
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> Result<&Tensor> {
        self.check(v)?;
        Ok(&self.nodes[v.index].value)
    }

    pub fn shape(&self, v: Var) -> Result<&[usize]> {
        Ok(self.value(v)?.shape())
    }

    /// Gradient written by the last [`Tape::backward`] call, if `v` was reached.
    pub fn grad(&self, v: Var) -> Result<Option<&[f64]>> {
        Ok(self.value(v)?.grad())
    }

    pub fn requires_grad(&self, v: Var) -> Result<bool> {
        self.check(v)?;
        Ok(self.nodes[v.index].requires_grad)
    }

    fn check(&self, v: Var) -> Result<()> {
        if v.tape != self.id || v.index >= self.nodes.len() {
            return Err(Error::NotOnTape(v.index));
        }
        Ok(())
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            tape: self.id,
            index: self.nodes.len() - 1,
        }
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.index].requires_grad)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let (av, bv) = (&self.nodes[a.index].value, &self.nodes[b.index].value);
        let ((m, k), (k2, n)) = match (av.dims2(), bv.dims2()) {
            (Ok(x), Ok(y)) if x.1 == y.0 => (x, y),
            _ => return Err(Error::shape("matmul", av.shape(), bv.shape())),
        };
        debug_assert_eq!(k, k2);
        let out = Tensor::new(vec![m, n], matmul_kernel(av.data(), bv.data(), m, k, n))?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    fn binary(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let out = self.nodes[a.index].value.zip_map(&self.nodes[b.index].value, name, f)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(out, op, rg))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        self.check(a)?;
        let out = self.nodes[a.index].value.map(|x| x * s);
        let rg = self.any_grad(&[a]);
        Ok(self.push(out, Op::Scale(a, s), rg))
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Result<Var> {
        self.check(a)?;
        let out = self.nodes[a.index].value.map(|x| x + s);
        let rg = self.any_grad(&[a]);
        Ok(self.push(out, Op::Shift(a), rg))
    }

    /// Dispatches an elementwise op against a tensor or scalar operand.
    ///
    /// `Scale` requires a scalar; `Add`/`Sub`/`Mul` accept either.
    pub fn elementwise(&mut self, op: ElementwiseOp, a: Var, b: Operand) -> Result<Var> {
        match (op, b) {
            (ElementwiseOp::Add, Operand::Var(b)) => self.add(a, b),
            (ElementwiseOp::Sub, Operand::Var(b)) => self.sub(a, b),
            (ElementwiseOp::Mul, Operand::Var(b)) => self.mul(a, b),
            (ElementwiseOp::Add, Operand::Scalar(s)) => self.add_scalar(a, s),
            (ElementwiseOp::Sub, Operand::Scalar(s)) => self.add_scalar(a, -s),
            (ElementwiseOp::Mul | ElementwiseOp::Scale, Operand::Scalar(s)) => self.scale(a, s),
            (ElementwiseOp::Scale, Operand::Var(_)) => Err(Error::InvalidArgument(
                "scale takes a scalar operand".into(),
            )),
        }
    }

    /// Adds a length-`n` bias to every row of an `[m×n]` tensor.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        self.check(a)?;
        self.check(bias)?;
        let (av, bv) = (&self.nodes[a.index].value, &self.nodes[bias.index].value);
        let (_, n) = av.dims2()?;
        if bv.shape() != [n] {
            return Err(Error::shape("add_bias", av.shape(), bv.shape()));
        }
        let mut data = av.data().to_vec();
        for row in data.chunks_exact_mut(n) {
            row.iter_mut().zip(bv.data()).for_each(|(x, b)| *x += b);
        }
        let out = Tensor::new(av.shape().to_vec(), data)?;
        let rg = self.any_grad(&[a, bias]);
        Ok(self.push(out, Op::AddBias(a, bias), rg))
    }

    /// Elementwise map whose forward value and local derivative are supplied
    /// per element by the caller.
    pub fn map(&mut self, a: Var, f: impl Fn(f64) -> f64, df: impl Fn(f64) -> f64) -> Result<Var> {
        self.check(a)?;
        let input = &self.nodes[a.index].value;
        let out = input.map(&f);
        let deriv = input.data().iter().map(|&x| df(x)).collect();
        let rg = self.any_grad(&[a]);
        Ok(self.push(out, Op::Map { input: a, deriv }, rg))
    }

    /// `1` where `a ≥ theta`, else `0`; the backward rule is `surrogate(a)`.
    pub fn heaviside_shifted(&mut self, a: Var, theta: f64, surrogate: impl Fn(f64) -> f64) -> Result<Var> {
        self.map(a, |x| if x >= theta { 1.0 } else { 0.0 }, surrogate)
    }

    /// Feature-wise normalization of an `[rows×c]` tensor.
    ///
    /// With `frozen = None` the batch statistics are used and returned; with
    /// `Some(stats)` the given running statistics are applied instead.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
        frozen: Option<&BatchStats>,
    ) -> Result<(Var, BatchStats)> {
        self.check(x)?;
        self.check(gamma)?;
        self.check(beta)?;
        let xv = &self.nodes[x.index].value;
        let (rows, c) = xv.dims2()?;
        let (gv, bv) = (&self.nodes[gamma.index].value, &self.nodes[beta.index].value);
        if gv.shape() != [c] || bv.shape() != [c] {
            return Err(Error::shape("batch_norm", xv.shape(), gv.shape()));
        }
        let stats = match frozen {
            Some(s) => {
                if s.mean.len() != c || s.var.len() != c {
                    return Err(Error::shape("batch_norm", xv.shape(), &[s.mean.len()]));
                }
                s.clone()
            }
            None => {
                let mut mean = vec![0.0; c];
                for row in xv.data().chunks_exact(c) {
                    mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
                }
                mean.iter_mut().for_each(|m| *m /= rows as f64);
                let mut var = vec![0.0; c];
                for row in xv.data().chunks_exact(c) {
                    for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                        *s += (v - m) * (v - m);
                    }
                }
                var.iter_mut().for_each(|s| *s /= rows as f64);
                BatchStats { mean, var }
            }
        };
        let inv_std: Vec<f64> = stats.var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let mut xhat = xv.data().to_vec();
        for row in xhat.chunks_exact_mut(c) {
            for ((v, m), s) in row.iter_mut().zip(&stats.mean).zip(&inv_std) {
                *v = (*v - m) * s;
            }
        }
        let mut out = xhat.clone();
        for row in out.chunks_exact_mut(c) {
            for ((v, g), b) in row.iter_mut().zip(gv.data()).zip(bv.data()) {
                *v = *v * g + b;
            }
        }
        let out = Tensor::new(vec![rows, c], out)?;
        let rg = self.any_grad(&[x, gamma, beta]);
        let op = Op::BatchNorm {
            input: x,
            gamma,
            beta,
            xhat,
            inv_std,
            frozen: frozen.is_some(),
        };
        Ok((self.push(out, op, rg), stats))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        self.check(a)?;
        let out = self.nodes[a.index].value.reshape(shape)?;
        let rg = self.any_grad(&[a]);
        Ok(self.push(out, Op::Reshape(a), rg))
    }

    /// Maximum over `axis`; ties route the gradient to the first maximal index.
    pub fn max_over_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        self.check(a)?;
        let v = &self.nodes[a.index].value;
        let (outer, len, inner) = split_axis(v.shape(), axis)?;
        let mut data = vec![f64::NEG_INFINITY; outer * inner];
        let mut argmax = vec![0usize; outer * inner];
        for o in 0..outer {
            for j in 0..len {
                let base = (o * len + j) * inner;
                for i in 0..inner {
                    let x = v.data()[base + i];
                    let slot = o * inner + i;
                    if j == 0 || x > data[slot] {
                        data[slot] = x;
                        argmax[slot] = base + i;
                    }
                }
            }
        }
        let out = Tensor::new(reduced_shape(v.shape(), axis), data)?;
        let rg = self.any_grad(&[a]);
        Ok(self.push(out, Op::MaxAxis { input: a, argmax }, rg))
    }

    pub fn mean_over_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        self.check(a)?;
        let v = &self.nodes[a.index].value;
        let (outer, len, inner) = split_axis(v.shape(), axis)?;
        let mut data = vec![0.0; outer * inner];
        for o in 0..outer {
            for j in 0..len {
                let base = (o * len + j) * inner;
                for i in 0..inner {
                    data[o * inner + i] += v.data()[base + i];
                }
            }
        }
        data.iter_mut().for_each(|x| *x /= len as f64);
        let out = Tensor::new(reduced_shape(v.shape(), axis), data)?;
        let rg = self.any_grad(&[a]);
        Ok(self.push(out, Op::MeanAxis { input: a, outer, len, inner }, rg))
    }

    /// Sum of every element, as a scalar.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let out = Tensor::scalar(self.nodes[a.index].value.sum_all());
        let rg = self.any_grad(&[a]);
        Ok(self.push(out, Op::Sum(a), rg))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, count: usize) -> Result<Var> {
        self.check(a)?;
        let out = self.nodes[a.index].value.rows(start, count)?;
        let cols = out.shape()[1];
        let rg = self.any_grad(&[a]);
        Ok(self.push(out, Op::SliceRows { input: a, offset: start * cols }, rg))
    }

    /// Stacks rank-2 tensors with equal column counts along rows.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or(Error::Empty("concat_rows"))?;
        for &p in parts {
            self.check(p)?;
        }
        let (_, cols) = self.nodes[first.index].value.dims2()?;
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let v = &self.nodes[p.index].value;
            let (r, c) = v.dims2()?;
            if c != cols {
                return Err(Error::shape(
                    "concat_rows",
                    self.nodes[first.index].value.shape(),
                    v.shape(),
                ));
            }
            rows += r;
            data.extend_from_slice(v.data());
        }
        let out = Tensor::new(vec![rows, cols], data)?;
        let rg = self.any_grad(parts);
        Ok(self.push(out, Op::ConcatRows(parts.to_vec()), rg))
    }

    /// Fills `shape` with the value of a single-element tensor.
    pub fn broadcast_scalar(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let s = self.value(a)?.item()?;
        let out = Tensor::full(shape, s);
        let rg = self.any_grad(&[a]);
        Ok(self.push(out, Op::Broadcast(a), rg))
    }

    /// Mean softmax cross-entropy of `[batch×classes]` logits.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        self.check(logits)?;
        let v = &self.nodes[logits.index].value;
        let (b, k) = v.dims2()?;
        if labels.len() != b {
            return Err(Error::shape("softmax_cross_entropy", v.shape(), &[labels.len()]));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::LabelOutOfRange { label, classes: k });
        }
        let mut probs = vec![0.0; b * k];
        let mut loss = 0.0;
        for ((row, p), &label) in v.data().chunks_exact(k).zip(probs.chunks_exact_mut(k)).zip(labels) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for (pi, &x) in p.iter_mut().zip(row) {
                *pi = (x - max).exp();
                z += *pi;
            }
            p.iter_mut().for_each(|pi| *pi /= z);
            loss -= row[label] - max - z.ln();
        }
        let out = Tensor::scalar(loss / b as f64);
        let rg = self.any_grad(&[logits]);
        let op = Op::SoftmaxCrossEntropy {
            logits,
            probs,
            labels: labels.to_vec(),
        };
        Ok(self.push(out, op, rg))
    }

    /// Propagates `∂loss/∂·` to every node reachable from `loss`.
    ///
    /// Grad slots from any previous call are cleared first, so each call
    /// writes each reachable slot exactly once.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        self.check(loss)?;
        if self.nodes[loss.index].value.numel() != 1 {
            return Err(Error::NotScalar(self.nodes[loss.index].value.shape().to_vec()));
        }
        for node in &mut self.nodes {
            node.value.zero_grad();
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.index + 1];
        grads[loss.index] = Some(vec![1.0]);

        for idx in (0..=loss.index).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let nodes = &self.nodes;
            let mut send = |v: Var, delta: Vec<f64>| {
                if !nodes[v.index].requires_grad {
                    return;
                }
                match &mut grads[v.index] {
                    Some(acc) => acc.iter_mut().zip(&delta).for_each(|(a, d)| *a += d),
                    slot @ None => *slot = Some(delta),
                }
            };
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let (av, bv) = (&nodes[a.index].value, &nodes[b.index].value);
                    let (m, k) = av.dims2()?;
                    let n = bv.shape()[1];
                    if nodes[a.index].requires_grad {
                        send(*a, matmul_nt_kernel(&g, bv.data(), m, k, n));
                    }
                    if nodes[b.index].requires_grad {
                        send(*b, matmul_tn_kernel(av.data(), &g, m, k, n));
                    }
                }
                Op::Add(a, b) => {
                    send(*a, g.clone());
                    send(*b, g.clone());
                }
                Op::Sub(a, b) => {
                    send(*a, g.clone());
                    send(*b, g.iter().map(|x| -x).collect());
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (nodes[a.index].value.data(), nodes[b.index].value.data());
                    send(*a, g.iter().zip(bv).map(|(g, y)| g * y).collect());
                    send(*b, g.iter().zip(av).map(|(g, x)| g * x).collect());
                }
                Op::Scale(a, s) => send(*a, g.iter().map(|x| x * s).collect()),
                Op::Shift(a) | Op::Reshape(a) => send(*a, g.clone()),
                Op::AddBias(a, bias) => {
                    let n = nodes[bias.index].value.numel();
                    let mut gb = vec![0.0; n];
                    for row in g.chunks_exact(n) {
                        gb.iter_mut().zip(row).for_each(|(s, x)| *s += x);
                    }
                    send(*bias, gb);
                    send(*a, g.clone());
                }
                Op::Map { input, deriv } => {
                    send(*input, g.iter().zip(deriv).map(|(g, d)| g * d).collect())
                }
                Op::BatchNorm {
                    input,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                    frozen,
                } => {
                    let c = inv_std.len();
                    let rows = (g.len() / c) as f64;
                    let gam = nodes[gamma.index].value.data();
                    let mut sum_g = vec![0.0; c];
                    let mut sum_gx = vec![0.0; c];
                    for (gr, xr) in g.chunks_exact(c).zip(xhat.chunks_exact(c)) {
                        for j in 0..c {
                            sum_g[j] += gr[j];
                            sum_gx[j] += gr[j] * xr[j];
                        }
                    }
                    let mut gx = vec![0.0; g.len()];
                    for ((out, gr), xr) in gx.chunks_exact_mut(c).zip(g.chunks_exact(c)).zip(xhat.chunks_exact(c)) {
                        for j in 0..c {
                            out[j] = if *frozen {
                                gr[j] * gam[j] * inv_std[j]
                            } else {
                                gam[j] * inv_std[j] / rows * (rows * gr[j] - sum_g[j] - xr[j] * sum_gx[j])
                            };
                        }
                    }
                    send(*input, gx);
                    send(*gamma, sum_gx);
                    send(*beta, sum_g);
                }
                Op::MaxAxis { input, argmax } => {
                    let mut gi = vec![0.0; nodes[input.index].value.numel()];
                    for (&src, gv) in argmax.iter().zip(&g) {
                        gi[src] += gv;
                    }
                    send(*input, gi);
                }
                Op::MeanAxis { input, outer, len, inner } => {
                    let mut gi = vec![0.0; outer * len * inner];
                    for o in 0..*outer {
                        for j in 0..*len {
                            for i in 0..*inner {
                                gi[(o * len + j) * inner + i] = g[o * inner + i] / *len as f64;
                            }
                        }
                    }
                    send(*input, gi);
                }
                Op::Sum(a) => send(*a, vec![g[0]; nodes[a.index].value.numel()]),
                Op::SliceRows { input, offset } => {
                    let mut gi = vec![0.0; nodes[input.index].value.numel()];
                    gi[*offset..*offset + g.len()].copy_from_slice(&g);
                    send(*input, gi);
                }
                Op::ConcatRows(parts) => {
                    let mut at = 0;
                    for p in parts {
                        let n = nodes[p.index].value.numel();
                        send(*p, g[at..at + n].to_vec());
                        at += n;
                    }
                }
                Op::Broadcast(a) => send(*a, vec![g.iter().sum()]),
                Op::SoftmaxCrossEntropy { logits, probs, labels } => {
                    let b = labels.len();
                    let k = probs.len() / b;
                    let mut gl = probs.clone();
                    for (row, &label) in gl.chunks_exact_mut(k).zip(labels) {
                        row[label] -= 1.0;
                        row.iter_mut().for_each(|x| *x *= g[0] / b as f64);
                    }
                    send(*logits, gl);
                }
            }
            self.nodes[idx].value.set_grad(g)?;
        }
        Ok(())
    }
}

fn reduced_shape(shape: &[usize], axis: usize) -> Vec<usize> {
    shape
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != axis)
        .map(|(_, &d)| d)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn matmul_examples() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::matrix(&[&[1.0, 0.0], &[0.0, 1.0]]));
        let b = tape.constant(Tensor::matrix(&[&[3.0, 4.0], &[5.0, 6.0]]));
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(c).unwrap().data(), &[3.0, 4.0, 5.0, 6.0]);

        let a = tape.constant(t(&[1, 2], &[1.0, 2.0]));
        let b = tape.constant(t(&[2, 1], &[3.0, 4.0]));
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(c).unwrap().data(), &[11.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(Tensor::zeros(&[4, 2]));
        let err = tape.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("[2, 3]") && err.contains("[4, 2]"), "{err}");
    }

    #[test]
    fn elementwise_examples() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::vector(vec![1.0, 2.0]));
        let b = tape.constant(Tensor::vector(vec![3.0, 4.0]));
        let s = tape.elementwise(ElementwiseOp::Add, a, Operand::Var(b)).unwrap();
        assert_eq!(tape.value(s).unwrap().data(), &[4.0, 6.0]);

        let x = tape.constant(Tensor::vector(vec![2.0, 3.0]));
        let m = tape.elementwise(ElementwiseOp::Mul, x, Operand::Scalar(0.25)).unwrap();
        assert_eq!(tape.value(m).unwrap().data(), &[0.5, 0.75]);

        let short = tape.constant(Tensor::vector(vec![1.0]));
        assert!(tape.add(a, short).is_err());
    }

    #[test]
    fn heaviside_boundary_is_inclusive() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![0.49, 0.5, 0.51]));
        let s = tape.heaviside_shifted(x, 0.5, |_| 1.0).unwrap();
        assert_eq!(tape.value(s).unwrap().data(), &[0.0, 1.0, 1.0]);
    }

    #[test]
    fn heaviside_uses_caller_surrogate() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![0.0, 1.0]));
        let s = tape.heaviside_shifted(x, 0.5, |v| 10.0 + v).unwrap();
        let l = tape.sum(s).unwrap();
        tape.backward(l).unwrap();
        assert_eq!(tape.grad(x).unwrap().unwrap(), &[10.0, 11.0]);
    }

    #[test]
    fn reduce_examples() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::matrix(&[&[1.0, 5.0], &[3.0, 2.0]]));
        let m = tape.max_over_axis(a, 0).unwrap();
        assert_eq!(tape.value(m).unwrap().data(), &[3.0, 5.0]);

        let b = tape.constant(Tensor::matrix(&[&[2.0, 4.0]]));
        let mean = tape.mean_over_axis(b, 1).unwrap();
        assert_eq!(tape.value(mean).unwrap().shape(), &[1]);
        assert_eq!(tape.value(mean).unwrap().data(), &[3.0]);

        let ones = tape.constant(Tensor::ones(&[3, 3]));
        let s = tape.sum(ones).unwrap();
        assert_eq!(tape.value(s).unwrap().item().unwrap(), 9.0);

        assert!(matches!(
            tape.max_over_axis(a, 2),
            Err(Error::AxisOutOfRange { .. })
        ));
    }

    #[test]
    fn max_routes_gradient_to_argmax() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::matrix(&[&[1.0, 5.0], &[3.0, 2.0]]));
        let m = tape.max_over_axis(a, 0).unwrap();
        let l = tape.sum(m).unwrap();
        tape.backward(l).unwrap();
        assert_eq!(tape.grad(a).unwrap().unwrap(), &[0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn backward_examples() {
        // loss = sum(w ⊙ x)
        let mut tape = Tape::new();
        let w = tape.leaf(Tensor::vector(vec![1.0, 2.0]));
        let x = tape.constant(Tensor::vector(vec![3.0, 4.0]));
        let wx = tape.mul(w, x).unwrap();
        let l = tape.sum(wx).unwrap();
        tape.backward(l).unwrap();
        assert_eq!(tape.grad(w).unwrap().unwrap(), &[3.0, 4.0]);
        assert!(tape.grad(x).unwrap().is_none());

        // loss = sum((w·x)²) with w = 2, x = 3
        let mut tape = Tape::new();
        let w = tape.leaf(Tensor::vector(vec![2.0]));
        let x = tape.constant(Tensor::vector(vec![3.0]));
        let wx = tape.mul(w, x).unwrap();
        let sq = tape.mul(wx, wx).unwrap();
        let l = tape.sum(sq).unwrap();
        tape.backward(l).unwrap();
        assert_eq!(tape.grad(w).unwrap().unwrap(), &[36.0]);
    }

    #[test]
    fn backward_rejects_non_scalar_and_foreign_vars() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::vector(vec![1.0, 2.0]));
        assert!(matches!(tape.backward(a), Err(Error::NotScalar(_))));

        let mut other = Tape::new();
        let b = other.leaf(Tensor::scalar(1.0));
        assert!(matches!(tape.backward(b), Err(Error::NotOnTape(_))));

        tape.clear();
        assert!(tape.value(a).is_err());
    }

    #[test]
    fn repeated_backward_does_not_double_count() {
        let mut tape = Tape::new();
        let w = tape.leaf(Tensor::vector(vec![1.0, 2.0]));
        let l = tape.sum(w).unwrap();
        tape.backward(l).unwrap();
        tape.backward(l).unwrap();
        assert_eq!(tape.grad(w).unwrap().unwrap(), &[1.0, 1.0]);
    }

    #[test]
    fn uniform_logits_give_log_classes() {
        let mut tape = Tape::new();
        let z = tape.leaf(Tensor::zeros(&[2, 8]));
        let l = tape.softmax_cross_entropy(z, &[0, 7]).unwrap();
        let v = tape.value(l).unwrap().item().unwrap();
        assert!((v - 8f64.ln()).abs() < 1e-12);
        assert!(matches!(
            tape.softmax_cross_entropy(z, &[0, 8]),
            Err(Error::LabelOutOfRange { label: 8, classes: 8 })
        ));
    }

    #[test]
    fn concat_and_slice_round_trip_gradients() {
        let mut tape = Tape::new();
        let a = tape.leaf(t(&[1, 2], &[1.0, 2.0]));
        let b = tape.leaf(t(&[2, 2], &[3.0, 4.0, 5.0, 6.0]));
        let c = tape.concat_rows(&[a, b]).unwrap();
        assert_eq!(tape.shape(c).unwrap(), &[3, 2]);
        let s = tape.slice_rows(c, 1, 1).unwrap();
        assert_eq!(tape.value(s).unwrap().data(), &[3.0, 4.0]);
        let l = tape.sum(s).unwrap();
        tape.backward(l).unwrap();
        assert_eq!(tape.grad(a).unwrap().unwrap(), &[0.0, 0.0]);
        assert_eq!(tape.grad(b).unwrap().unwrap(), &[1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn batch_norm_normalizes_columns() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::matrix(&[&[1.0, 10.0], &[3.0, 30.0]]));
        let g = tape.leaf(Tensor::ones(&[2]));
        let b = tape.leaf(Tensor::zeros(&[2]));
        let (y, stats) = tape.batch_norm(x, g, b, 0.0, None).unwrap();
        assert_eq!(stats.mean, vec![2.0, 20.0]);
        assert_eq!(stats.var, vec![1.0, 100.0]);
        assert_eq!(tape.value(y).unwrap().data(), &[-1.0, -1.0, 1.0, 1.0]);
    }
}
