//! Tape-based reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! A [`Tape`] records every operation applied to its [`Var`] handles. Calling
//! [`Tape::backward`] on a scalar output walks the record in reverse once and
//! returns the gradient of every node with respect to that output. Gradients
//! accumulate additively when a value is used more than once. A tape can be
//! differentiated only once; a second call is an error.

pub mod kernels;

use std::cell::{Cell, RefCell};
use std::fmt;

use crate::error::{Error, Result};
use crate::tensor::{broadcast_index_map, broadcast_shape, Tensor};
use kernels::ConvDims;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BinaryKind {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy)]
enum Unary {
    Relu,
    Softplus,
    Exp,
    Log,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Constant,
    Binary(BinaryKind, usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    Unary(Unary, usize),
    Matmul(usize, usize),
    Transpose(usize),
    Reshape(usize),
    Conv1d { x: usize, k: usize, dims: ConvDims },
    SumAxis(usize, usize),
    MeanAxis(usize, usize),
    SumAll(usize),
    MeanAll(usize),
    Concat(Vec<usize>, usize),
    Slice { a: usize, axis: usize, start: usize },
    L2Norm(usize, usize),
    LogSumExp(usize, usize),
    BroadcastTo(usize),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Ordered record of executed operations.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    consumed: Cell<bool>,
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tape")
            .field("nodes", &self.nodes.borrow().len())
            .field("consumed", &self.consumed.get())
            .finish()
    }
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

/// Gradients produced by one backward pass, indexed by node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient with respect to `var`; zeros if the output does not depend on it.
    pub fn get(&self, var: Var<'_>) -> Tensor {
        self.get_id(var.id)
    }

    pub(crate) fn get_id(&self, id: usize) -> Tensor {
        let shape = &self.shapes[id];
        match &self.grads[id] {
            Some(g) => Tensor::new(shape, g.clone()).expect("gradient shape"),
            None => Tensor::zeros(shape),
        }
    }
}

struct Split {
    outer: usize,
    n: usize,
    inner: usize,
}

fn split_axis(shape: &[usize], axis: usize) -> Split {
    Split {
        outer: shape[..axis].iter().product(),
        n: shape[axis],
        inner: shape[axis + 1..].iter().product(),
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Register a differentiable leaf (a parameter or an input being checked).
    pub fn leaf(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, true)
    }

    /// Register a value that never receives a gradient.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Constant, false)
    }

    pub fn scalar(&self, value: f64) -> Var<'_> {
        self.constant(Tensor::scalar(value))
    }

    fn push(&self, mut value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        value.grad = None;
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn needs(&self, ids: &[usize]) -> bool {
        let nodes = self.nodes.borrow();
        ids.iter().any(|&i| nodes[i].requires_grad)
    }

    fn record(&self, value: Tensor, op: Op, parents: &[usize]) -> Var<'_> {
        let rg = self.needs(parents);
        self.push(value, op, rg)
    }

    /// Concatenate along `axis`; all other dimensions must agree.
    pub fn concat<'t>(&'t self, parts: &[Var<'t>], axis: usize) -> Result<Var<'t>> {
        let first = parts
            .first()
            .ok_or_else(|| Error::domain("concat", "no inputs"))?;
        let base = first.shape();
        if axis >= base.len() {
            return Err(Error::shape("concat", &base, &[axis]));
        }
        let mut total = 0;
        for p in parts {
            let s = p.shape();
            if s.len() != base.len()
                || s.iter()
                    .zip(&base)
                    .enumerate()
                    .any(|(d, (x, y))| d != axis && x != y)
            {
                return Err(Error::shape("concat", &base, &s));
            }
            total += s[axis];
        }
        let mut out_shape = base.clone();
        out_shape[axis] = total;
        let Split { outer, inner, .. } = split_axis(&out_shape, axis);
        let mut data = Vec::with_capacity(outer * total * inner);
        {
            let nodes = self.nodes.borrow();
            for o in 0..outer {
                for p in parts {
                    let v = &nodes[p.id].value;
                    let chunk = v.shape()[axis] * inner;
                    data.extend_from_slice(&v.data()[o * chunk..(o + 1) * chunk]);
                }
            }
        }
        let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        let value = Tensor::new(&out_shape, data)?;
        Ok(self.record(value, Op::Concat(ids.clone(), axis), &ids))
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        if !std::ptr::eq(loss.tape, self) {
            return Err(Error::Tape("loss belongs to a different tape".into()));
        }
        if self.consumed.replace(true) {
            return Err(Error::Tape("backward already ran on this tape".into()));
        }
        let nodes = self.nodes.borrow();
        let out = &nodes[loss.id].value;
        if out.len() != 1 {
            return Err(Error::Tape(format!(
                "backward needs a scalar loss, got shape {:?}",
                out.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        grads[loss.id] = Some(vec![1.0]);

        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            backprop(&nodes, id, &g, &mut grads);
            grads[id] = Some(g);
        }
        let shapes = nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { grads, shapes })
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], nodes: &[Node], id: usize, contrib: Vec<f64>) {
    if !nodes[id].requires_grad {
        return;
    }
    match &mut grads[id] {
        Some(g) => g.iter_mut().zip(contrib).for_each(|(a, b)| *a += b),
        slot @ None => *slot = Some(contrib),
    }
}

fn backprop(nodes: &[Node], id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
    let node = &nodes[id];
    let out = &node.value;
    match &node.op {
        Op::Leaf | Op::Constant => {}
        Op::Binary(kind, a, b) => {
            let (va, vb) = (&nodes[*a].value, &nodes[*b].value);
            let ma = broadcast_index_map(va.shape(), out.shape());
            let mb = broadcast_index_map(vb.shape(), out.shape());
            let (xa, xb) = (va.data(), vb.data());
            if nodes[*a].requires_grad {
                let mut ga = vec![0.0; va.len()];
                for (o, &gv) in g.iter().enumerate() {
                    ga[ma[o]] += match kind {
                        BinaryKind::Add | BinaryKind::Sub => gv,
                        BinaryKind::Mul => gv * xb[mb[o]],
                        BinaryKind::Div => gv / xb[mb[o]],
                    };
                }
                accumulate(grads, nodes, *a, ga);
            }
            if nodes[*b].requires_grad {
                let mut gb = vec![0.0; vb.len()];
                for (o, &gv) in g.iter().enumerate() {
                    gb[mb[o]] += match kind {
                        BinaryKind::Add => gv,
                        BinaryKind::Sub => -gv,
                        BinaryKind::Mul => gv * xa[ma[o]],
                        BinaryKind::Div => {
                            let d = xb[mb[o]];
                            -gv * xa[ma[o]] / (d * d)
                        }
                    };
                }
                accumulate(grads, nodes, *b, gb);
            }
        }
        Op::Scale(a, s) => accumulate(grads, nodes, *a, g.iter().map(|v| v * s).collect()),
        Op::AddScalar(a) | Op::Reshape(a) => accumulate(grads, nodes, *a, g.to_vec()),
        Op::Unary(u, a) => {
            let x = nodes[*a].value.data();
            let y = out.data();
            let ga = match u {
                Unary::Relu => g
                    .iter()
                    .zip(x)
                    .map(|(gv, &xv)| if xv > 0.0 { *gv } else { 0.0 })
                    .collect(),
                Unary::Softplus => g.iter().zip(x).map(|(gv, &xv)| gv * sigmoid(xv)).collect(),
                Unary::Exp => g.iter().zip(y).map(|(gv, yv)| gv * yv).collect(),
                Unary::Log => g.iter().zip(x).map(|(gv, xv)| gv / xv).collect(),
            };
            accumulate(grads, nodes, *a, ga);
        }
        Op::Matmul(a, b) => {
            let (va, vb) = (&nodes[*a].value, &nodes[*b].value);
            let (m, k, n) = (va.shape()[0], va.shape()[1], vb.shape()[1]);
            if nodes[*a].requires_grad {
                accumulate(grads, nodes, *a, kernels::matmul_bt(g, vb.data(), m, n, k));
            }
            if nodes[*b].requires_grad {
                accumulate(grads, nodes, *b, kernels::matmul_at(va.data(), g, m, k, n));
            }
        }
        Op::Transpose(a) => {
            let (r, c) = (out.shape()[0], out.shape()[1]);
            let mut ga = vec![0.0; r * c];
            for i in 0..r {
                for j in 0..c {
                    ga[j * r + i] = g[i * c + j];
                }
            }
            accumulate(grads, nodes, *a, ga);
        }
        Op::Conv1d { x, k, dims } => {
            if nodes[*x].requires_grad {
                let gx = kernels::conv1d_grad_input(g, nodes[*k].value.data(), *dims);
                accumulate(grads, nodes, *x, gx);
            }
            if nodes[*k].requires_grad {
                let gk = kernels::conv1d_grad_kernel(g, nodes[*x].value.data(), *dims);
                accumulate(grads, nodes, *k, gk);
            }
        }
        Op::SumAxis(a, axis) | Op::MeanAxis(a, axis) => {
            let s = split_axis(nodes[*a].value.shape(), *axis);
            let scale = match node.op {
                Op::MeanAxis(..) => 1.0 / s.n as f64,
                _ => 1.0,
            };
            let mut ga = vec![0.0; s.outer * s.n * s.inner];
            for o in 0..s.outer {
                for j in 0..s.n {
                    for i in 0..s.inner {
                        ga[(o * s.n + j) * s.inner + i] = g[o * s.inner + i] * scale;
                    }
                }
            }
            accumulate(grads, nodes, *a, ga);
        }
        Op::SumAll(a) => accumulate(grads, nodes, *a, vec![g[0]; nodes[*a].value.len()]),
        Op::MeanAll(a) => {
            let n = nodes[*a].value.len();
            accumulate(grads, nodes, *a, vec![g[0] / n as f64; n]);
        }
        Op::Concat(parts, axis) => {
            let Split { outer, n, inner } = split_axis(out.shape(), *axis);
            let mut offset = 0;
            for &p in parts {
                let np = nodes[p].value.shape()[*axis];
                if nodes[p].requires_grad {
                    let mut gp = Vec::with_capacity(outer * np * inner);
                    for o in 0..outer {
                        let start = (o * n + offset) * inner;
                        gp.extend_from_slice(&g[start..start + np * inner]);
                    }
                    accumulate(grads, nodes, p, gp);
                }
                offset += np;
            }
        }
        Op::Slice { a, axis, start } => {
            let Split { outer, n, inner } = split_axis(nodes[*a].value.shape(), *axis);
            let len = out.shape()[*axis];
            let mut ga = vec![0.0; outer * n * inner];
            for o in 0..outer {
                let src = &g[o * len * inner..(o + 1) * len * inner];
                let dst = (o * n + start) * inner;
                ga[dst..dst + len * inner].copy_from_slice(src);
            }
            accumulate(grads, nodes, *a, ga);
        }
        Op::L2Norm(a, axis) => {
            let x = nodes[*a].value.data();
            let Split { outer, n, inner } = split_axis(nodes[*a].value.shape(), *axis);
            let norm = out.data();
            let mut ga = vec![0.0; x.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let r = o * inner + i;
                    if norm[r] == 0.0 {
                        continue;
                    }
                    for j in 0..n {
                        let idx = (o * n + j) * inner + i;
                        ga[idx] = g[r] * x[idx] / norm[r];
                    }
                }
            }
            accumulate(grads, nodes, *a, ga);
        }
        Op::LogSumExp(a, axis) => {
            let x = nodes[*a].value.data();
            let Split { outer, n, inner } = split_axis(nodes[*a].value.shape(), *axis);
            let lse = out.data();
            let mut ga = vec![0.0; x.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let r = o * inner + i;
                    for j in 0..n {
                        let idx = (o * n + j) * inner + i;
                        ga[idx] = g[r] * (x[idx] - lse[r]).exp();
                    }
                }
            }
            accumulate(grads, nodes, *a, ga);
        }
        Op::BroadcastTo(a) => {
            let va = &nodes[*a].value;
            let map = broadcast_index_map(va.shape(), out.shape());
            let mut ga = vec![0.0; va.len()];
            for (o, &gv) in g.iter().enumerate() {
                ga[map[o]] += gv;
            }
            accumulate(grads, nodes, *a, ga);
        }
    }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn value(&self) -> Tensor {
        self.tape.nodes.borrow()[self.id].value.clone()
    }

    /// Value of a single-element var.
    pub fn item(&self) -> f64 {
        self.tape.nodes.borrow()[self.id].value.data()[0]
    }

    fn with<R>(&self, f: impl FnOnce(&Tensor) -> R) -> R {
        f(&self.tape.nodes.borrow()[self.id].value)
    }

    fn check_same_tape(&self, other: &Var<'t>) {
        assert!(
            std::ptr::eq(self.tape, other.tape),
            "vars from different tapes"
        );
    }

    fn binary(self, other: Var<'t>, kind: BinaryKind, name: &'static str) -> Result<Var<'t>> {
        self.check_same_tape(&other);
        let value = {
            let nodes = self.tape.nodes.borrow();
            let (a, b) = (&nodes[self.id].value, &nodes[other.id].value);
            let shape = broadcast_shape(a.shape(), b.shape())
                .ok_or_else(|| Error::shape(name, a.shape(), b.shape()))?;
            let f: fn(f64, f64) -> f64 = match kind {
                BinaryKind::Add => |x, y| x + y,
                BinaryKind::Sub => |x, y| x - y,
                BinaryKind::Mul => |x, y| x * y,
                BinaryKind::Div => |x, y| x / y,
            };
            let data = if a.shape() == b.shape() {
                a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect()
            } else {
                let ma = broadcast_index_map(a.shape(), &shape);
                let mb = broadcast_index_map(b.shape(), &shape);
                ma.iter()
                    .zip(&mb)
                    .map(|(&i, &j)| f(a.data()[i], b.data()[j]))
                    .collect()
            };
            Tensor::new(&shape, data)?
        };
        Ok(self
            .tape
            .record(value, Op::Binary(kind, self.id, other.id), &[self.id, other.id]))
    }

    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, BinaryKind::Add, "add")
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, BinaryKind::Sub, "sub")
    }

    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, BinaryKind::Mul, "mul")
    }

    pub fn div(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, BinaryKind::Div, "div")
    }

    pub fn scale(self, s: f64) -> Var<'t> {
        let value = self.with(|t| {
            Tensor::new(t.shape(), t.data().iter().map(|v| v * s).collect()).expect("shape")
        });
        self.tape.record(value, Op::Scale(self.id, s), &[self.id])
    }

    pub fn neg(self) -> Var<'t> {
        self.scale(-1.0)
    }

    pub fn add_scalar(self, s: f64) -> Var<'t> {
        let value = self.with(|t| {
            Tensor::new(t.shape(), t.data().iter().map(|v| v + s).collect()).expect("shape")
        });
        self.tape.record(value, Op::AddScalar(self.id), &[self.id])
    }

    fn unary(self, u: Unary, f: impl Fn(f64) -> f64) -> Var<'t> {
        let value = self.with(|t| {
            Tensor::new(t.shape(), t.data().iter().map(|&v| f(v)).collect()).expect("shape")
        });
        self.tape.record(value, Op::Unary(u, self.id), &[self.id])
    }

    pub fn relu(self) -> Var<'t> {
        self.unary(Unary::Relu, |v| v.max(0.0))
    }

    /// `log(1 + exp(x))` in the overflow-free form `max(x, 0) + log1p(exp(-|x|))`.
    pub fn softplus(self) -> Var<'t> {
        self.unary(Unary::Softplus, softplus)
    }

    pub fn exp(self) -> Var<'t> {
        self.unary(Unary::Exp, f64::exp)
    }

    pub fn log(self) -> Result<Var<'t>> {
        if let Some(bad) = self.with(|t| t.data().iter().copied().find(|v| !(*v > 0.0))) {
            return Err(Error::domain("log", format!("non-positive input {bad}")));
        }
        Ok(self.unary(Unary::Log, f64::ln))
    }

    pub fn square(self) -> Var<'t> {
        self.mul(self).expect("same shape")
    }

    /// 2-D matrix product `[m, k] @ [k, n]`.
    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.check_same_tape(&other);
        let value = {
            let nodes = self.tape.nodes.borrow();
            let (a, b) = (&nodes[self.id].value, &nodes[other.id].value);
            if a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0] {
                return Err(Error::shape("matmul", a.shape(), b.shape()));
            }
            let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
            Tensor::new(&[m, n], kernels::matmul(a.data(), b.data(), m, k, n))?
        };
        Ok(self
            .tape
            .record(value, Op::Matmul(self.id, other.id), &[self.id, other.id]))
    }

    /// Transpose of a rank-2 var.
    pub fn t(self) -> Result<Var<'t>> {
        let value = self.with(|a| {
            if a.rank() != 2 {
                return Err(Error::shape("transpose", a.shape(), &[0, 0]));
            }
            let (r, c) = (a.shape()[0], a.shape()[1]);
            let mut d = vec![0.0; r * c];
            for i in 0..r {
                for j in 0..c {
                    d[j * r + i] = a.data()[i * c + j];
                }
            }
            Tensor::new(&[c, r], d)
        })?;
        Ok(self.tape.record(value, Op::Transpose(self.id), &[self.id]))
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Var<'t>> {
        let value = self.value().reshaped(shape)?;
        Ok(self.tape.record(value, Op::Reshape(self.id), &[self.id]))
    }

    /// 1-D cross-correlation of `[B, C, L]` with a kernel `[C_out, C, W]`,
    /// zero-padded by `padding` on both sides.
    pub fn conv1d(self, kernel: Var<'t>, padding: usize) -> Result<Var<'t>> {
        self.check_same_tape(&kernel);
        let (value, dims) = {
            let nodes = self.tape.nodes.borrow();
            let (x, k) = (&nodes[self.id].value, &nodes[kernel.id].value);
            if x.rank() != 3 || k.rank() != 3 || x.shape()[1] != k.shape()[1] {
                return Err(Error::shape("conv1d", x.shape(), k.shape()));
            }
            let dims = ConvDims {
                batch: x.shape()[0],
                c_in: x.shape()[1],
                len: x.shape()[2],
                c_out: k.shape()[0],
                width: k.shape()[2],
                padding,
            };
            if dims.width == 0 || dims.width > dims.len + 2 * padding {
                return Err(Error::shape("conv1d", x.shape(), k.shape()));
            }
            let data = kernels::conv1d_forward(x.data(), k.data(), dims);
            (
                Tensor::new(&[dims.batch, dims.c_out, dims.out_len()], data)?,
                dims,
            )
        };
        Ok(self.tape.record(
            value,
            Op::Conv1d {
                x: self.id,
                k: kernel.id,
                dims,
            },
            &[self.id, kernel.id],
        ))
    }

    fn reduce_axis(
        self,
        axis: usize,
        keepdim: bool,
        name: &'static str,
        f: impl Fn(&[f64]) -> f64,
    ) -> Result<(Tensor, usize)> {
        self.with(|a| {
            if axis >= a.rank() {
                return Err(Error::shape(name, a.shape(), &[axis]));
            }
            let Split { outer, n, inner } = split_axis(a.shape(), axis);
            let mut out = Vec::with_capacity(outer * inner);
            let mut buf = vec![0.0; n];
            for o in 0..outer {
                for i in 0..inner {
                    for (j, b) in buf.iter_mut().enumerate() {
                        *b = a.data()[(o * n + j) * inner + i];
                    }
                    out.push(f(&buf));
                }
            }
            let mut shape = a.shape().to_vec();
            if keepdim {
                shape[axis] = 1;
            } else {
                shape.remove(axis);
            }
            Ok((Tensor::new(&shape, out)?, axis))
        })
    }

    pub fn sum_axis(self, axis: usize, keepdim: bool) -> Result<Var<'t>> {
        let (v, ax) = self.reduce_axis(axis, keepdim, "sum_axis", |r| r.iter().sum())?;
        Ok(self.tape.record(v, Op::SumAxis(self.id, ax), &[self.id]))
    }

    pub fn mean_axis(self, axis: usize, keepdim: bool) -> Result<Var<'t>> {
        let (v, ax) = self.reduce_axis(axis, keepdim, "mean_axis", |r| {
            r.iter().sum::<f64>() / r.len() as f64
        })?;
        Ok(self.tape.record(v, Op::MeanAxis(self.id, ax), &[self.id]))
    }

    /// Euclidean norm along `axis`, keeping the reduced dimension.
    pub fn l2_norm(self, axis: usize) -> Result<Var<'t>> {
        let (v, ax) = self.reduce_axis(axis, true, "l2_norm", |r| {
            r.iter().map(|x| x * x).sum::<f64>().sqrt()
        })?;
        Ok(self.tape.record(v, Op::L2Norm(self.id, ax), &[self.id]))
    }

    /// Stable `log Σ exp` along `axis`, keeping the reduced dimension.
    pub fn logsumexp(self, axis: usize) -> Result<Var<'t>> {
        let (v, ax) = self.reduce_axis(axis, true, "logsumexp", |r| {
            let m = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            m + r.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
        })?;
        Ok(self.tape.record(v, Op::LogSumExp(self.id, ax), &[self.id]))
    }

    pub fn sum(self) -> Var<'t> {
        let v = self.with(|a| Tensor::scalar(a.data().iter().sum()));
        self.tape.record(v, Op::SumAll(self.id), &[self.id])
    }

    pub fn mean(self) -> Var<'t> {
        let v = self.with(|a| Tensor::scalar(a.data().iter().sum::<f64>() / a.len() as f64));
        self.tape.record(v, Op::MeanAll(self.id), &[self.id])
    }

    /// Contiguous range `start..end` along `axis`.
    pub fn slice(self, axis: usize, start: usize, end: usize) -> Result<Var<'t>> {
        let value = self.with(|a| {
            if axis >= a.rank() || start > end || end > a.shape()[axis] {
                return Err(Error::shape("slice", a.shape(), &[axis, start, end]));
            }
            let Split { outer, n, inner } = split_axis(a.shape(), axis);
            let len = end - start;
            let mut d = Vec::with_capacity(outer * len * inner);
            for o in 0..outer {
                let s = (o * n + start) * inner;
                d.extend_from_slice(&a.data()[s..s + len * inner]);
            }
            let mut shape = a.shape().to_vec();
            shape[axis] = len;
            Tensor::new(&shape, d)
        })?;
        Ok(self.tape.record(
            value,
            Op::Slice {
                a: self.id,
                axis,
                start,
            },
            &[self.id],
        ))
    }

    pub fn broadcast_to(self, shape: &[usize]) -> Result<Var<'t>> {
        let value = self.with(|a| {
            let s = broadcast_shape(a.shape(), shape)
                .filter(|s| s == shape)
                .ok_or_else(|| Error::shape("broadcast_to", a.shape(), shape))?;
            let map = broadcast_index_map(a.shape(), &s);
            Tensor::new(&s, map.iter().map(|&i| a.data()[i]).collect())
        })?;
        Ok(self.tape.record(value, Op::BroadcastTo(self.id), &[self.id]))
    }
}
