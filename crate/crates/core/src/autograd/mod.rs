//! Reverse-mode automatic differentiation over dense tensors.
//!
//! A [`Tape`] records every operation eagerly, in execution order, so the
//! record is topologically sorted by construction. [`Tape::backward`] replays
//! it once in reverse, accumulating gradients additively into every input
//! that requires them.
//!
//! Broadcasting follows one rule: after dropping leading size-1 dimensions,
//! the smaller operand's shape must be a suffix of the larger one's (a
//! single-element operand broadcasts against anything).

mod gradcheck;

use std::borrow::Cow;

pub use gradcheck::{grad_check, GradCheck};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Logit assigned to masked softmax positions before normalization.
pub const MASKED_LOGIT: f64 = -1e9;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnaryOp {
    Tanh,
    Sigmoid,
    Relu,
    Exp,
    Log,
    Neg,
    Square,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReduceOp {
    Sum,
    Mean,
    Max,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    All,
    Dim(usize),
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Binary(BinaryOp, Var, Var),
    Scale(Var, f64),
    Unary(UnaryOp, Var),
    Reduce { x: Var, op: ReduceOp, axis: Axis, argmax: Vec<usize> },
    Concat { xs: Vec<Var>, axis: usize },
    Narrow { x: Var, axis: usize, start: usize },
    Reshape(Var),
    Softmax { x: Var, axis: usize },
    LogSoftmax { x: Var, axis: usize },
    GatherRows { table: Var, rows: Vec<Option<usize>> },
}

struct Node<'a, T: Scalar> {
    shape: Vec<usize>,
    value: Cow<'a, [T]>,
    op: Op,
    requires_grad: bool,
}

/// Ordered record of executed operations and the values they produced.
///
/// Leaves may borrow their storage (see [`Tape::leaf_borrowed`]) so model
/// parameters are bound without copying.
pub struct Tape<'a, T: Scalar = f32> {
    nodes: Vec<Node<'a, T>>,
}

impl<T: Scalar> Default for Tape<'_, T> {
    fn default() -> Self {
        Self::new()
    }
}

/// `(outer, dim, inner)` extents around `axis`.
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn strip_leading_ones(shape: &[usize]) -> &[usize] {
    let first = shape.iter().position(|&d| d != 1).unwrap_or(shape.len());
    &shape[first..]
}

fn broadcasts_into(small: &[usize], large: &[usize]) -> bool {
    let n_small: usize = small.iter().product();
    if n_small == 1 {
        return true;
    }
    let s = strip_leading_ones(small);
    s.len() <= large.len() && large[large.len() - s.len()..] == *s
}

impl<'a, T: Scalar> Tape<'a, T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    /// Number of recorded nodes (leaves included).
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, tensor: Tensor<T>, requires_grad: bool) -> Var {
        let (shape, data) = tensor.into_parts();
        self.push(shape, Cow::Owned(data), Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, tensor: Tensor<T>) -> Var {
        self.leaf(tensor, false)
    }

    pub fn variable(&mut self, tensor: Tensor<T>) -> Var {
        self.leaf(tensor, true)
    }

    /// Records a leaf whose values live outside the tape.
    pub fn leaf_borrowed(&mut self, shape: &[usize], values: Cow<'a, [T]>, requires_grad: bool) -> Result<Var> {
        let expected: usize = shape.iter().product();
        if expected != values.len() {
            return Err(Error::dim("leaf", format!("shape {shape:?} needs {expected} values, got {}", values.len())));
        }
        Ok(self.push(shape.to_vec(), values, Op::Leaf, requires_grad))
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn data(&self, v: Var) -> &[T] {
        &self.nodes[v.0].value
    }

    pub fn value(&self, v: Var) -> Tensor<T> {
        let node = &self.nodes[v.0];
        Tensor::new(node.shape.clone(), node.value.to_vec()).expect("recorded shapes are consistent")
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, shape: Vec<usize>, value: Cow<'a, [T]>, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { shape, value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn record(&mut self, name: &'static str, shape: Vec<usize>, data: Vec<T>, op: Op, inputs: &[Var]) -> Result<Var> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { op: name });
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        Ok(self.push(shape, Cow::Owned(data), op, requires_grad))
    }

    fn rank2(&self, op: &'static str, v: Var) -> Result<(usize, usize)> {
        match self.shape(v) {
            [r, c] => Ok((*r, *c)),
            s => Err(Error::dim(op, format!("expected a 2-D tensor, got shape {s:?}"))),
        }
    }

    fn check_axis(&self, op: &'static str, v: Var, axis: usize) -> Result<()> {
        let rank = self.shape(v).len();
        if axis >= rank {
            return Err(Error::dim(op, format!("axis {axis} out of range for rank {rank}")));
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.rank2("matmul", a)?;
        let (k2, n) = self.rank2("matmul", b)?;
        if k != k2 {
            return Err(Error::dim(
                "matmul",
                format!("inner dimensions disagree: {:?} · {:?}", self.shape(a), self.shape(b)),
            ));
        }
        let mut out = vec![T::zero(); m * n];
        T::gemm(m, k, n, self.data(a), false, self.data(b), false, &mut out, false);
        self.record("matmul", vec![m, n], out, Op::MatMul(a, b), &[a, b])
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.rank2("transpose", a)?;
        let src = self.data(a);
        let mut out = vec![T::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = src[i * c + j];
            }
        }
        self.record("transpose", vec![c, r], out, Op::Transpose(a), &[a])
    }

    pub fn binary(&mut self, a: Var, b: Var, op: BinaryOp) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let out_shape = if sa == sb || broadcasts_into(sb, sa) {
            sa.to_vec()
        } else if broadcasts_into(sa, sb) {
            sb.to_vec()
        } else {
            return Err(Error::dim("binary", format!("shapes {sa:?} and {sb:?} do not broadcast")));
        };
        let (xa, xb) = (self.data(a), self.data(b));
        let (na, nb) = (xa.len(), xb.len());
        let n: usize = out_shape.iter().product();
        let f = match op {
            BinaryOp::Add => |x: T, y: T| x + y,
            BinaryOp::Sub => |x: T, y: T| x - y,
            BinaryOp::Mul => |x: T, y: T| x * y,
        };
        let out = if na == n && nb == n {
            xa.iter().zip(xb).map(|(&x, &y)| f(x, y)).collect()
        } else {
            (0..n).map(|i| f(xa[i % na], xb[i % nb])).collect()
        };
        self.record("binary", out_shape, out, Op::Binary(op, a, b), &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, BinaryOp::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, BinaryOp::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, BinaryOp::Mul)
    }

    /// Multiplies by a constant.
    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        let c = T::lit(factor);
        let out = self.data(a).iter().map(|&x| x * c).collect();
        self.record("scale", self.shape(a).to_vec(), out, Op::Scale(a, factor), &[a])
    }

    pub fn unary(&mut self, x: Var, op: UnaryOp) -> Result<Var> {
        let src = self.data(x);
        if op == UnaryOp::Log {
            if let Some(bad) = src.iter().find(|&&v| v <= T::zero()) {
                return Err(Error::Domain { op: "log", detail: format!("non-positive input {bad:?}") });
            }
        }
        let one = T::one();
        let out = src
            .iter()
            .map(|&v| match op {
                UnaryOp::Tanh => v.tanh(),
                UnaryOp::Sigmoid => one / (one + (-v).exp()),
                UnaryOp::Relu => v.max(T::zero()),
                UnaryOp::Exp => v.exp(),
                UnaryOp::Log => v.ln(),
                UnaryOp::Neg => -v,
                UnaryOp::Square => v * v,
            })
            .collect();
        self.record("unary", self.shape(x).to_vec(), out, Op::Unary(op, x), &[x])
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.unary(x, UnaryOp::Tanh)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.unary(x, UnaryOp::Sigmoid)
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.unary(x, UnaryOp::Relu)
    }

    pub fn exp(&mut self, x: Var) -> Result<Var> {
        self.unary(x, UnaryOp::Exp)
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        self.unary(x, UnaryOp::Log)
    }

    pub fn neg(&mut self, x: Var) -> Result<Var> {
        self.unary(x, UnaryOp::Neg)
    }

    pub fn square(&mut self, x: Var) -> Result<Var> {
        self.unary(x, UnaryOp::Square)
    }

    /// Reduces along `axis` (dropping it) or over everything (giving a scalar).
    /// `Max` breaks ties toward the lowest index.
    pub fn reduce(&mut self, x: Var, op: ReduceOp, axis: Axis) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let (outer, dim, inner, out_shape) = match axis {
            Axis::All => (1, shape.iter().product(), 1, Vec::new()),
            Axis::Dim(a) => {
                self.check_axis("reduce", x, a)?;
                let (o, d, i) = split_axis(&shape, a);
                let mut s = shape.clone();
                s.remove(a);
                (o, d, i, s)
            }
        };
        if dim == 0 && op != ReduceOp::Sum {
            return Err(Error::dim("reduce", format!("{op:?} over an empty axis of shape {shape:?}")));
        }
        let src = self.data(x);
        let mut out = vec![T::zero(); outer * inner];
        let mut argmax = Vec::new();
        if op == ReduceOp::Max {
            argmax = vec![0; outer * inner];
        }
        for o in 0..outer {
            for i in 0..inner {
                let at = |d: usize| src[(o * dim + d) * inner + i];
                let slot = o * inner + i;
                match op {
                    ReduceOp::Sum | ReduceOp::Mean => {
                        let mut acc = T::zero();
                        for d in 0..dim {
                            acc = acc + at(d);
                        }
                        if op == ReduceOp::Mean {
                            acc = acc / T::lit(dim as f64);
                        }
                        out[slot] = acc;
                    }
                    ReduceOp::Max => {
                        let mut best = 0;
                        for d in 1..dim {
                            if at(d) > at(best) {
                                best = d;
                            }
                        }
                        out[slot] = at(best);
                        argmax[slot] = best;
                    }
                }
            }
        }
        self.record("reduce", out_shape, out, Op::Reduce { x, op, axis, argmax }, &[x])
    }

    pub fn sum(&mut self, x: Var, axis: Axis) -> Result<Var> {
        self.reduce(x, ReduceOp::Sum, axis)
    }

    pub fn mean(&mut self, x: Var, axis: Axis) -> Result<Var> {
        self.reduce(x, ReduceOp::Mean, axis)
    }

    pub fn max(&mut self, x: Var, axis: Axis) -> Result<Var> {
        self.reduce(x, ReduceOp::Max, axis)
    }

    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        let first = *xs.first().ok_or_else(|| Error::dim("concat", "no inputs"))?;
        self.check_axis("concat", first, axis)?;
        let base = self.shape(first).to_vec();
        let mut total = 0;
        for &v in xs {
            let s = self.shape(v);
            let compatible =
                s.len() == base.len() && s.iter().zip(&base).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(Error::dim("concat", format!("shape {s:?} incompatible with {base:?} on axis {axis}")));
            }
            total += s[axis];
        }
        let (outer, _, inner) = split_axis(&base, axis);
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &v in xs {
                let chunk = self.shape(v)[axis] * inner;
                out.extend_from_slice(&self.data(v)[o * chunk..(o + 1) * chunk]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        self.record("concat", shape, out, Op::Concat { xs: xs.to_vec(), axis }, xs)
    }

    /// Slice `start..start + len` along `axis`.
    pub fn narrow(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        self.check_axis("narrow", x, axis)?;
        let shape = self.shape(x).to_vec();
        if start + len > shape[axis] {
            return Err(Error::dim("narrow", format!("range {start}..{} exceeds axis of {}", start + len, shape[axis])));
        }
        let (outer, dim, inner) = split_axis(&shape, axis);
        let src = self.data(x);
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * dim + start) * inner;
            out.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        self.record("narrow", out_shape, out, Op::Narrow { x, axis, start }, &[x])
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let n: usize = shape.iter().product();
        if n != self.data(x).len() {
            return Err(Error::dim("reshape", format!("cannot view {:?} as {shape:?}", self.shape(x))));
        }
        let out = self.data(x).to_vec();
        self.record("reshape", shape.to_vec(), out, Op::Reshape(x), &[x])
    }

    /// Softmax along `axis`. `visible`, when given, has one flag per element;
    /// `false` entries get exactly zero weight. Every slice needs at least one
    /// visible entry.
    pub fn softmax(&mut self, x: Var, axis: usize, visible: Option<&[bool]>) -> Result<Var> {
        self.check_axis("softmax", x, axis)?;
        let shape = self.shape(x).to_vec();
        let src = self.data(x);
        if let Some(mask) = visible {
            if mask.len() != src.len() {
                return Err(Error::dim("softmax", format!("mask has {} entries for shape {shape:?}", mask.len())));
            }
        }
        let (outer, dim, inner) = split_axis(&shape, axis);
        let masked = T::lit(MASKED_LOGIT);
        let mut out = vec![T::zero(); src.len()];
        let mut logits = vec![T::zero(); dim];
        for o in 0..outer {
            for i in 0..inner {
                let idx = |d: usize| (o * dim + d) * inner + i;
                let mut any_visible = false;
                for (d, z) in logits.iter_mut().enumerate() {
                    let shown = visible.is_none_or(|m| m[idx(d)]);
                    any_visible |= shown;
                    *z = if shown { src[idx(d)] } else { masked };
                }
                if !any_visible && dim > 0 {
                    return Err(Error::DegenerateSlice { slice: o * inner + i });
                }
                let peak = logits.iter().copied().fold(T::neg_infinity(), T::max);
                let mut total = T::zero();
                for z in logits.iter_mut() {
                    *z = (*z - peak).exp();
                    total = total + *z;
                }
                for (d, z) in logits.iter().enumerate() {
                    out[idx(d)] = *z / total;
                }
            }
        }
        self.record("softmax", shape, out, Op::Softmax { x, axis }, &[x])
    }

    pub fn log_softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.check_axis("log_softmax", x, axis)?;
        let shape = self.shape(x).to_vec();
        let src = self.data(x);
        let (outer, dim, inner) = split_axis(&shape, axis);
        let mut out = vec![T::zero(); src.len()];
        for o in 0..outer {
            for i in 0..inner {
                let idx = |d: usize| (o * dim + d) * inner + i;
                let peak = (0..dim).map(|d| src[idx(d)]).fold(T::neg_infinity(), T::max);
                let total: T = (0..dim).map(|d| (src[idx(d)] - peak).exp()).sum();
                let lse = peak + total.ln();
                for d in 0..dim {
                    out[idx(d)] = src[idx(d)] - lse;
                }
            }
        }
        self.record("log_softmax", shape, out, Op::LogSoftmax { x, axis }, &[x])
    }

    /// Stacks rows of a 2-D table; `None` yields a zero row that receives no
    /// gradient.
    pub fn gather_rows(&mut self, table: Var, rows: &[Option<usize>]) -> Result<Var> {
        let (n_rows, width) = self.rank2("gather_rows", table)?;
        let src = self.data(table);
        let mut out = Vec::with_capacity(rows.len() * width);
        for row in rows {
            match *row {
                Some(r) if r >= n_rows => return Err(Error::Vocabulary { index: r, size: n_rows }),
                Some(r) => out.extend_from_slice(&src[r * width..(r + 1) * width]),
                None => out.resize(out.len() + width, T::zero()),
            }
        }
        self.record(
            "gather_rows",
            vec![rows.len(), width],
            out,
            Op::GatherRows { table, rows: rows.to_vec() },
            &[table],
        )
    }

    /// Propagates gradients from a single-element `loss` back through the
    /// record. Every leaf that requires gradients gets an entry; leaves the
    /// loss does not depend on get zeros.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let n_loss = self.data(loss).len();
        if n_loss != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(vec![T::one()]);
        }
        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(dy) = grads[id].take() else { continue };
            self.propagate(node, &dy, &mut grads);
        }
        let shapes = self.nodes.iter().map(|n| n.shape.clone()).collect();
        let leaves = self.nodes.iter().map(|n| matches!(n.op, Op::Leaf) && n.requires_grad).collect();
        Ok(Gradients { grads, shapes, leaves })
    }

    fn propagate(&self, node: &Node<'a, T>, dy: &[T], grads: &mut [Option<Vec<T>>]) {
        let nodes = &self.nodes;
        macro_rules! acc {
            ($v:expr) => {
                slot(nodes, grads, $v)
            };
        }
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = (self.shape(*a)[0], self.shape(*a)[1]);
                let n = self.shape(*b)[1];
                if let Some(ga) = acc!(*a) {
                    T::gemm(m, n, k, dy, false, self.data(*b), true, ga, true);
                }
                if let Some(gb) = acc!(*b) {
                    T::gemm(k, m, n, self.data(*a), true, dy, false, gb, true);
                }
            }
            Op::Transpose(a) => {
                let (r, c) = (self.shape(*a)[0], self.shape(*a)[1]);
                if let Some(ga) = acc!(*a) {
                    for i in 0..r {
                        for j in 0..c {
                            ga[i * c + j] = ga[i * c + j] + dy[j * r + i];
                        }
                    }
                }
            }
            Op::Binary(op, a, b) => {
                let (xa, xb) = (self.data(*a), self.data(*b));
                let (na, nb) = (xa.len(), xb.len());
                if let Some(ga) = acc!(*a) {
                    for (i, &g) in dy.iter().enumerate() {
                        let d = match op {
                            BinaryOp::Add | BinaryOp::Sub => g,
                            BinaryOp::Mul => g * xb[i % nb],
                        };
                        ga[i % na] = ga[i % na] + d;
                    }
                }
                if let Some(gb) = acc!(*b) {
                    for (i, &g) in dy.iter().enumerate() {
                        let d = match op {
                            BinaryOp::Add => g,
                            BinaryOp::Sub => -g,
                            BinaryOp::Mul => g * xa[i % na],
                        };
                        gb[i % nb] = gb[i % nb] + d;
                    }
                }
            }
            Op::Scale(a, factor) => {
                let c = T::lit(*factor);
                if let Some(ga) = acc!(*a) {
                    for (g, &d) in ga.iter_mut().zip(dy) {
                        *g = *g + d * c;
                    }
                }
            }
            Op::Unary(op, x) => {
                let (xs, ys) = (self.data(*x), &node.value);
                let one = T::one();
                if let Some(gx) = acc!(*x) {
                    for i in 0..dy.len() {
                        let (xv, yv) = (xs[i], ys[i]);
                        let local = match op {
                            UnaryOp::Tanh => one - yv * yv,
                            UnaryOp::Sigmoid => yv * (one - yv),
                            UnaryOp::Relu => {
                                if xv > T::zero() {
                                    one
                                } else {
                                    T::zero()
                                }
                            }
                            UnaryOp::Exp => yv,
                            UnaryOp::Log => one / xv,
                            UnaryOp::Neg => -one,
                            UnaryOp::Square => xv + xv,
                        };
                        gx[i] = gx[i] + dy[i] * local;
                    }
                }
            }
            Op::Reduce { x, op, axis, argmax } => {
                let shape = self.shape(*x);
                let (outer, dim, inner) = match axis {
                    Axis::All => (1, shape.iter().product(), 1),
                    Axis::Dim(a) => split_axis(shape, *a),
                };
                if let Some(gx) = acc!(*x) {
                    let mean_scale = T::one() / T::lit(dim.max(1) as f64);
                    for o in 0..outer {
                        for i in 0..inner {
                            let slot = o * inner + i;
                            let g = dy[slot];
                            match op {
                                ReduceOp::Sum | ReduceOp::Mean => {
                                    let g = if *op == ReduceOp::Mean { g * mean_scale } else { g };
                                    for d in 0..dim {
                                        let at = (o * dim + d) * inner + i;
                                        gx[at] = gx[at] + g;
                                    }
                                }
                                ReduceOp::Max => {
                                    let at = (o * dim + argmax[slot]) * inner + i;
                                    gx[at] = gx[at] + g;
                                }
                            }
                        }
                    }
                }
            }
            Op::Concat { xs, axis } => {
                let (outer, total, inner) = split_axis(&node.shape, *axis);
                let mut offset = 0;
                for &v in xs {
                    let width = self.shape(v)[*axis];
                    if let Some(gv) = acc!(v) {
                        let chunk = width * inner;
                        for o in 0..outer {
                            let src = &dy[(o * total + offset) * inner..][..chunk];
                            for (g, &d) in gv[o * chunk..(o + 1) * chunk].iter_mut().zip(src) {
                                *g = *g + d;
                            }
                        }
                    }
                    offset += width;
                }
            }
            Op::Narrow { x, axis, start } => {
                let (outer, dim, inner) = split_axis(self.shape(*x), *axis);
                let len = node.shape[*axis];
                if let Some(gx) = acc!(*x) {
                    for o in 0..outer {
                        let dst = &mut gx[(o * dim + start) * inner..][..len * inner];
                        for (g, &d) in dst.iter_mut().zip(&dy[o * len * inner..(o + 1) * len * inner]) {
                            *g = *g + d;
                        }
                    }
                }
            }
            Op::Reshape(x) => {
                if let Some(gx) = acc!(*x) {
                    for (g, &d) in gx.iter_mut().zip(dy) {
                        *g = *g + d;
                    }
                }
            }
            Op::Softmax { x, axis } => {
                let (outer, dim, inner) = split_axis(&node.shape, *axis);
                let y = &node.value;
                if let Some(gx) = acc!(*x) {
                    for o in 0..outer {
                        for i in 0..inner {
                            let idx = |d: usize| (o * dim + d) * inner + i;
                            let dot: T = (0..dim).map(|d| y[idx(d)] * dy[idx(d)]).sum();
                            for d in 0..dim {
                                let at = idx(d);
                                gx[at] = gx[at] + y[at] * (dy[at] - dot);
                            }
                        }
                    }
                }
            }
            Op::LogSoftmax { x, axis } => {
                let (outer, dim, inner) = split_axis(&node.shape, *axis);
                let y = &node.value;
                if let Some(gx) = acc!(*x) {
                    for o in 0..outer {
                        for i in 0..inner {
                            let idx = |d: usize| (o * dim + d) * inner + i;
                            let total: T = (0..dim).map(|d| dy[idx(d)]).sum();
                            for d in 0..dim {
                                let at = idx(d);
                                gx[at] = gx[at] + dy[at] - y[at].exp() * total;
                            }
                        }
                    }
                }
            }
            Op::GatherRows { table, rows } => {
                let width = self.shape(*table)[1];
                if let Some(gt) = acc!(*table) {
                    for (pos, row) in rows.iter().enumerate() {
                        if let Some(r) = *row {
                            let dst = &mut gt[r * width..(r + 1) * width];
                            for (g, &d) in dst.iter_mut().zip(&dy[pos * width..(pos + 1) * width]) {
                                *g = *g + d;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Gradient buffer of `v`, allocated on first use; `None` when `v` takes no
/// gradient.
fn slot<'g, T: Scalar>(nodes: &[Node<'_, T>], grads: &'g mut [Option<Vec<T>>], v: Var) -> Option<&'g mut Vec<T>> {
    let input = &nodes[v.0];
    if !input.requires_grad {
        return None;
    }
    Some(grads[v.0].get_or_insert_with(|| vec![T::zero(); input.value.len()]))
}

/// Gradients of one loss with respect to the leaves of a tape.
#[derive(Debug)]
pub struct Gradients<T: Scalar = f32> {
    grads: Vec<Option<Vec<T>>>,
    shapes: Vec<Vec<usize>>,
    leaves: Vec<bool>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of a leaf that requires gradients; zeros when the loss does
    /// not depend on it. `None` for non-leaves and constants.
    pub fn get(&self, v: Var) -> Option<Tensor<T>> {
        if !*self.leaves.get(v.0)? {
            return None;
        }
        let shape = self.shapes[v.0].clone();
        let data = match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => vec![T::zero(); shape.iter().product()],
        };
        Some(Tensor::new(shape, data).expect("gradient matches its leaf"))
    }

    /// Borrowed gradient values, `None` when absent (zero).
    pub fn raw(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0)?.as_deref()
    }
}
