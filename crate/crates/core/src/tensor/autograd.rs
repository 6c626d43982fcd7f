//! Reverse-mode differentiation over a dynamically built graph.
//!
//! Every backward rule is written in terms of differentiable [`Var`]
//! operations. With [`GradOptions::create_graph`] set, the gradients returned
//! by [`grad`] are themselves graph nodes and can be differentiated again;
//! otherwise the saved operands are detached first and the backward pass
//! records nothing.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::rc::Rc;

use super::kernels::{self, ConvGeom};
use super::{numel, DType, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Scale(f64),
    AddScalar,
    Exp,
    Log,
    Relu,
    PowF(f64),
    ClampMin(f64),
    MatMul,
    SumToShape,
    BroadcastTo,
    Reshape,
    Permute(Vec<usize>),
    Gather(Rc<Vec<usize>>),
    ScatterAdd(Rc<Vec<usize>>),
    Conv(usize),
    ConvInputGrad(usize),
    ConvWeightGrad(usize),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Div => "div",
            Op::Neg => "neg",
            Op::Scale(_) => "scale",
            Op::AddScalar => "add_scalar",
            Op::Exp => "exp",
            Op::Log => "log",
            Op::Relu => "relu",
            Op::PowF(_) => "powf",
            Op::ClampMin(_) => "clamp_min",
            Op::MatMul => "matmul",
            Op::SumToShape => "sum_to_shape",
            Op::BroadcastTo => "broadcast_to",
            Op::Reshape => "reshape",
            Op::Permute(_) => "permute",
            Op::Gather(_) => "gather",
            Op::ScatterAdd(_) => "scatter_add",
            Op::Conv(_) => "conv2d",
            Op::ConvInputGrad(_) => "conv2d_input_grad",
            Op::ConvWeightGrad(_) => "conv2d_weight_grad",
        }
    }
}

struct Node {
    value: Tensor,
    parents: Vec<Var>,
    op: Op,
    requires_grad: bool,
}

impl Drop for Node {
    // Unrolled inner loops produce very deep chains; release them without
    // recursing once per node.
    fn drop(&mut self) {
        let mut stack = std::mem::take(&mut self.parents);
        while let Some(v) = stack.pop() {
            if let Ok(mut node) = Rc::try_unwrap(v.0) {
                stack.append(&mut node.parents);
            }
        }
    }
}

/// A value in the computation graph.
///
/// Cloning a `Var` clones a handle, not the node. A `Var` is confined to
/// the thread that built it; move [`Tensor`]s across threads instead.
#[derive(Clone)]
pub struct Var(Rc<Node>);

impl fmt::Debug for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Var")
            .field("op", &self.0.op.name())
            .field("requires_grad", &self.0.requires_grad)
            .field("value", &self.0.value)
            .finish()
    }
}

impl Var {
    /// Differentiable input.
    pub fn leaf(value: Tensor) -> Var {
        Var(Rc::new(Node {
            value,
            parents: Vec::new(),
            op: Op::Leaf,
            requires_grad: true,
        }))
    }

    /// Input that gradients never flow into.
    pub fn constant(value: Tensor) -> Var {
        Var(Rc::new(Node {
            value,
            parents: Vec::new(),
            op: Op::Leaf,
            requires_grad: false,
        }))
    }

    pub fn scalar(value: f64, dtype: DType) -> Var {
        Var::constant(Tensor::scalar(value, dtype))
    }

    fn from_op(op: Op, value: Tensor, parents: Vec<Var>) -> Result<Var> {
        if !value.all_finite() {
            return Err(Error::Numeric { op: op.name() });
        }
        let requires_grad = parents.iter().any(|p| p.0.requires_grad);
        let (op, parents) = if requires_grad {
            (op, parents)
        } else {
            (Op::Leaf, Vec::new())
        };
        Ok(Var(Rc::new(Node {
            value,
            parents,
            op,
            requires_grad,
        })))
    }

    pub fn value(&self) -> &Tensor {
        &self.0.value
    }

    pub fn shape(&self) -> &[usize] {
        self.0.value.shape()
    }

    pub fn dtype(&self) -> DType {
        self.0.value.dtype()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    /// Same value, cut from the graph.
    pub fn detach(&self) -> Var {
        Var::constant(self.0.value.clone())
    }

    /// Identity of the underlying node.
    pub fn ptr_eq(&self, other: &Var) -> bool {
        Rc::ptr_eq(&self.0, &other.0)
    }

    fn key(&self) -> usize {
        Rc::as_ptr(&self.0) as usize
    }

    fn binary(
        &self,
        other: &Var,
        op: Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Var> {
        let (a, b) = (self.value(), other.value());
        let out_shape = kernels::broadcast_shape(a.shape(), b.shape())
            .ok_or_else(|| Error::shape(op.name(), a.shape(), b.shape()))?;
        let data = kernels::binary(a.data(), a.shape(), b.data(), b.shape(), &out_shape, f);
        let dtype = a.dtype().promote(b.dtype());
        let value = Tensor::from_raw(out_shape, data, dtype);
        Var::from_op(op, value, vec![self.clone(), other.clone()])
    }

    fn unary(&self, op: Op, f: impl Fn(f64) -> f64) -> Result<Var> {
        let value = self.value().map(f);
        Var::from_op(op, value, vec![self.clone()])
    }

    pub fn add(&self, other: &Var) -> Result<Var> {
        self.binary(other, Op::Add, |x, y| x + y)
    }

    pub fn sub(&self, other: &Var) -> Result<Var> {
        self.binary(other, Op::Sub, |x, y| x - y)
    }

    pub fn mul(&self, other: &Var) -> Result<Var> {
        self.binary(other, Op::Mul, |x, y| x * y)
    }

    pub fn div(&self, other: &Var) -> Result<Var> {
        self.binary(other, Op::Div, |x, y| x / y)
    }

    pub fn neg(&self) -> Result<Var> {
        self.unary(Op::Neg, |x| -x)
    }

    pub fn scale(&self, c: f64) -> Result<Var> {
        self.unary(Op::Scale(c), |x| x * c)
    }

    pub fn add_scalar(&self, c: f64) -> Result<Var> {
        self.unary(Op::AddScalar, |x| x + c)
    }

    pub fn exp(&self) -> Result<Var> {
        self.unary(Op::Exp, f64::exp)
    }

    pub fn log(&self) -> Result<Var> {
        if !self.value().all_finite() {
            return Err(Error::Numeric { op: "log" });
        }
        self.unary(Op::Log, f64::ln)
    }

    pub fn relu(&self) -> Result<Var> {
        self.unary(Op::Relu, |x| if x > 0.0 { x } else { 0.0 })
    }

    pub fn powf(&self, p: f64) -> Result<Var> {
        self.unary(Op::PowF(p), |x| x.powf(p))
    }

    pub fn sqrt(&self) -> Result<Var> {
        self.powf(0.5)
    }

    pub fn square(&self) -> Result<Var> {
        self.mul(self)
    }

    /// `max(x, floor)` elementwise; no gradient flows where clamped.
    pub fn clamp_min(&self, floor: f64) -> Result<Var> {
        self.unary(Op::ClampMin(floor), |x| x.max(floor))
    }

    /// 2-D matrix product.
    pub fn matmul(&self, other: &Var) -> Result<Var> {
        let (a, b) = (self.value(), other.value());
        if a.ndim() != 2 || b.ndim() != 2 || a.shape()[1] != b.shape()[0] {
            return Err(Error::shape("matmul", a.shape(), b.shape()));
        }
        let (n, k, m) = (a.shape()[0], a.shape()[1], b.shape()[1]);
        let data = kernels::matmul(a.data(), b.data(), n, k, m);
        let value = Tensor::from_raw(vec![n, m], data, a.dtype().promote(b.dtype()));
        Var::from_op(Op::MatMul, value, vec![self.clone(), other.clone()])
    }

    /// Sums broadcast axes away so the result has `shape`.
    pub fn sum_to_shape(&self, shape: &[usize]) -> Result<Var> {
        let x = self.value();
        if kernels::broadcast_shape(shape, x.shape()).as_deref() != Some(x.shape()) {
            return Err(Error::shape("sum_to_shape", x.shape(), shape));
        }
        if shape == x.shape() {
            return Ok(self.clone());
        }
        let data = kernels::sum_to_shape(x.data(), x.shape(), shape);
        let value = Tensor::from_raw(shape.to_vec(), data, x.dtype());
        Var::from_op(Op::SumToShape, value, vec![self.clone()])
    }

    pub fn broadcast_to(&self, shape: &[usize]) -> Result<Var> {
        let x = self.value();
        if kernels::broadcast_shape(x.shape(), shape).as_deref() != Some(shape) {
            return Err(Error::shape("broadcast_to", x.shape(), shape));
        }
        if shape == x.shape() {
            return Ok(self.clone());
        }
        let data = kernels::broadcast_to(x.data(), x.shape(), shape);
        let value = Tensor::from_raw(shape.to_vec(), data, x.dtype());
        Var::from_op(Op::BroadcastTo, value, vec![self.clone()])
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Var> {
        if shape == self.shape() {
            return Ok(self.clone());
        }
        let value = self.value().reshape(shape)?;
        Var::from_op(Op::Reshape, value, vec![self.clone()])
    }

    pub fn permute(&self, axes: &[usize]) -> Result<Var> {
        let x = self.value();
        let mut seen = vec![false; x.ndim()];
        if axes.len() != x.ndim() || axes.iter().any(|&a| a >= x.ndim() || std::mem::replace(&mut seen[a], true)) {
            return Err(Error::shape("permute", x.shape(), axes));
        }
        let (shape, data) = kernels::permute(x.data(), x.shape(), axes);
        let value = Tensor::from_raw(shape, data, x.dtype());
        Var::from_op(Op::Permute(axes.to_vec()), value, vec![self.clone()])
    }

    /// Transpose of a matrix.
    pub fn t(&self) -> Result<Var> {
        self.permute(&[1, 0])
    }

    /// `out[i] = x.flat[indices[i]]`, reshaped to `shape`.
    pub fn gather(&self, indices: Rc<Vec<usize>>, shape: &[usize]) -> Result<Var> {
        let x = self.value();
        if numel(shape) != indices.len() || indices.iter().any(|&i| i >= x.len()) {
            return Err(Error::shape("gather", x.shape(), shape));
        }
        let data = indices.iter().map(|&i| x.data()[i]).collect();
        let value = Tensor::from_raw(shape.to_vec(), data, x.dtype());
        Var::from_op(Op::Gather(indices), value, vec![self.clone()])
    }

    /// Adjoint of [`Var::gather`]: `out.flat[indices[i]] += x[i]`.
    pub fn scatter_add(&self, indices: Rc<Vec<usize>>, shape: &[usize]) -> Result<Var> {
        let x = self.value();
        let total = numel(shape);
        if x.len() != indices.len() || indices.iter().any(|&i| i >= total) {
            return Err(Error::shape("scatter_add", x.shape(), shape));
        }
        let mut data = vec![0.0; total];
        for (&i, &v) in indices.iter().zip(x.data()) {
            data[i] += v;
        }
        let value = Tensor::from_raw(shape.to_vec(), data, x.dtype());
        Var::from_op(Op::ScatterAdd(indices), value, vec![self.clone()])
    }

    /// Stride-1 2-D convolution, NCHW input, OIHW kernel, symmetric zero
    /// padding.
    pub fn conv2d(&self, weight: &Var, pad: usize) -> Result<Var> {
        let (x, w) = (self.value(), weight.value());
        let g = conv_geom(x.shape(), w.shape(), pad)?;
        let data = kernels::conv2d(x.data(), w.data(), &g);
        let value = Tensor::from_raw(
            vec![g.n, g.o, g.out_h(), g.out_w()],
            data,
            x.dtype().promote(w.dtype()),
        );
        Var::from_op(Op::Conv(pad), value, vec![self.clone(), weight.clone()])
    }

    fn conv2d_input_grad(&self, weight: &Var, pad: usize, x_shape: &[usize]) -> Result<Var> {
        let (gy, w) = (self.value(), weight.value());
        let g = conv_geom(x_shape, w.shape(), pad)?;
        if gy.shape() != [g.n, g.o, g.out_h(), g.out_w()] {
            return Err(Error::shape("conv2d_input_grad", gy.shape(), x_shape));
        }
        let data = kernels::conv2d_input_grad(gy.data(), w.data(), &g);
        let value = Tensor::from_raw(x_shape.to_vec(), data, gy.dtype().promote(w.dtype()));
        Var::from_op(Op::ConvInputGrad(pad), value, vec![self.clone(), weight.clone()])
    }

    fn conv2d_weight_grad(&self, gy: &Var, pad: usize, w_shape: &[usize]) -> Result<Var> {
        let (x, gyv) = (self.value(), gy.value());
        let g = conv_geom(x.shape(), w_shape, pad)?;
        if gyv.shape() != [g.n, g.o, g.out_h(), g.out_w()] {
            return Err(Error::shape("conv2d_weight_grad", gyv.shape(), w_shape));
        }
        let data = kernels::conv2d_weight_grad(x.data(), gyv.data(), &g);
        let value = Tensor::from_raw(w_shape.to_vec(), data, x.dtype().promote(gyv.dtype()));
        Var::from_op(Op::ConvWeightGrad(pad), value, vec![self.clone(), gy.clone()])
    }
}

fn conv_geom(x: &[usize], w: &[usize], pad: usize) -> Result<ConvGeom> {
    if x.len() != 4 || w.len() != 4 || x[1] != w[1] {
        return Err(Error::shape("conv2d", x, w));
    }
    if x[2] + 2 * pad < w[2] || x[3] + 2 * pad < w[3] {
        return Err(Error::shape("conv2d", x, w));
    }
    Ok(ConvGeom {
        n: x[0],
        c: x[1],
        h: x[2],
        w: x[3],
        o: w[0],
        kh: w[2],
        kw: w[3],
        pad,
    })
}

fn unbroadcast(g: Var, shape: &[usize]) -> Result<Var> {
    if g.shape() == shape {
        Ok(g)
    } else {
        g.sum_to_shape(shape)
    }
}

fn mask_where(t: &Tensor, keep: impl Fn(f64) -> bool) -> Var {
    Var::constant(t.map(|x| if keep(x) { 1.0 } else { 0.0 }))
}

/// Local gradient rules. `need[i]` says whether parent `i` wants a gradient.
fn backward(node: &Var, g: &Var, need: &[bool], create: bool) -> Result<Vec<Option<Var>>> {
    let n = &node.0;
    let p = |i: usize| {
        if create {
            n.parents[i].clone()
        } else {
            n.parents[i].detach()
        }
    };
    let out = || if create { node.clone() } else { node.detach() };
    let shape = |i: usize| n.parents[i].shape().to_vec();
    let want = |i: usize| need.get(i).copied().unwrap_or(false);

    let mut grads: Vec<Option<Var>> = vec![None; n.parents.len()];
    match &n.op {
        Op::Leaf => {}
        Op::Add => {
            if want(0) {
                grads[0] = Some(unbroadcast(g.clone(), &shape(0))?);
            }
            if want(1) {
                grads[1] = Some(unbroadcast(g.clone(), &shape(1))?);
            }
        }
        Op::Sub => {
            if want(0) {
                grads[0] = Some(unbroadcast(g.clone(), &shape(0))?);
            }
            if want(1) {
                grads[1] = Some(unbroadcast(g.neg()?, &shape(1))?);
            }
        }
        Op::Mul => {
            if want(0) {
                grads[0] = Some(unbroadcast(g.mul(&p(1))?, &shape(0))?);
            }
            if want(1) {
                grads[1] = Some(unbroadcast(g.mul(&p(0))?, &shape(1))?);
            }
        }
        Op::Div => {
            let b = p(1);
            if want(0) {
                grads[0] = Some(unbroadcast(g.div(&b)?, &shape(0))?);
            }
            if want(1) {
                let gb = g.mul(&out())?.div(&b)?.neg()?;
                grads[1] = Some(unbroadcast(gb, &shape(1))?);
            }
        }
        Op::Neg => grads[0] = Some(g.neg()?),
        Op::Scale(c) => grads[0] = Some(g.scale(*c)?),
        Op::AddScalar => grads[0] = Some(g.clone()),
        Op::Exp => grads[0] = Some(g.mul(&out())?),
        Op::Log => grads[0] = Some(g.div(&p(0))?),
        Op::Relu => grads[0] = Some(g.mul(&mask_where(n.parents[0].value(), |x| x > 0.0))?),
        Op::ClampMin(floor) => {
            let floor = *floor;
            grads[0] = Some(g.mul(&mask_where(n.parents[0].value(), |x| x > floor))?)
        }
        Op::PowF(e) => {
            let local = p(0).powf(e - 1.0)?.scale(*e)?;
            grads[0] = Some(g.mul(&local)?);
        }
        Op::MatMul => {
            if want(0) {
                grads[0] = Some(g.matmul(&p(1).t()?)?);
            }
            if want(1) {
                grads[1] = Some(p(0).t()?.matmul(g)?);
            }
        }
        Op::SumToShape => grads[0] = Some(g.broadcast_to(&shape(0))?),
        Op::BroadcastTo => grads[0] = Some(g.sum_to_shape(&shape(0))?),
        Op::Reshape => grads[0] = Some(g.reshape(&shape(0))?),
        Op::Permute(axes) => {
            let mut inv = vec![0; axes.len()];
            for (i, &a) in axes.iter().enumerate() {
                inv[a] = i;
            }
            grads[0] = Some(g.permute(&inv)?);
        }
        Op::Gather(idx) => grads[0] = Some(g.scatter_add(Rc::clone(idx), &shape(0))?),
        Op::ScatterAdd(idx) => grads[0] = Some(g.gather(Rc::clone(idx), &shape(0))?),
        Op::Conv(pad) => {
            if want(0) {
                grads[0] = Some(g.conv2d_input_grad(&p(1), *pad, &shape(0))?);
            }
            if want(1) {
                grads[1] = Some(p(0).conv2d_weight_grad(g, *pad, &shape(1))?);
            }
        }
        Op::ConvInputGrad(pad) => {
            // node = Tx(gy, w); <gz, Tx(gy, w)> = B(gz, w, gy)
            if want(0) {
                grads[0] = Some(g.conv2d(&p(1), *pad)?);
            }
            if want(1) {
                grads[1] = Some(g.conv2d_weight_grad(&p(0), *pad, &shape(1))?);
            }
        }
        Op::ConvWeightGrad(pad) => {
            // node = Tw(x, gy); <gz, Tw(x, gy)> = B(x, gz, gy)
            if want(0) {
                grads[0] = Some(p(1).conv2d_input_grad(g, *pad, &shape(0))?);
            }
            if want(1) {
                grads[1] = Some(p(0).conv2d(g, *pad)?);
            }
        }
    }
    Ok(grads)
}

#[derive(Clone, Copy, Debug, Default)]
pub struct GradOptions {
    /// Record the backward pass so the returned gradients are differentiable.
    pub create_graph: bool,
}

/// Result of [`grad`].
#[derive(Debug)]
pub struct Gradients {
    /// One gradient per `wrt` entry, same shapes.
    pub grads: Vec<Var>,
    /// Positions in `wrt` that the output does not depend on. Their
    /// gradients are zero.
    pub unreachable: Vec<usize>,
}

impl Gradients {
    pub fn has_unreachable(&self) -> bool {
        !self.unreachable.is_empty()
    }
}

/// Gradient of a scalar `output` with respect to each node in `wrt`.
///
/// `wrt` entries need not be leaves: gradients with respect to interior
/// nodes (e.g. adapted parameters) are returned as accumulated at that node,
/// and backpropagation is pruned to the part of the graph between `wrt`
/// and `output`.
pub fn grad(output: &Var, wrt: &[Var], opts: GradOptions) -> Result<Gradients> {
    if output.value().len() != 1 {
        return Err(Error::shape("grad", output.shape(), &[]));
    }

    let mut order: Vec<Var> = Vec::new();
    if output.requires_grad() {
        let mut visited: HashSet<usize> = HashSet::new();
        let mut stack: Vec<(Var, bool)> = vec![(output.clone(), false)];
        while let Some((v, expanded)) = stack.pop() {
            if expanded {
                order.push(v);
                continue;
            }
            if !visited.insert(v.key()) {
                continue;
            }
            stack.push((v.clone(), true));
            for p in &v.0.parents {
                if p.requires_grad() && !visited.contains(&p.key()) {
                    stack.push((p.clone(), false));
                }
            }
        }
    }

    let pos: HashMap<usize, usize> = order.iter().enumerate().map(|(i, v)| (v.key(), i)).collect();
    let wrt_keys: HashSet<usize> = wrt.iter().map(Var::key).collect();

    // A node needs a gradient if some wrt node is it or lies above it.
    let mut needed = vec![false; order.len()];
    for (i, v) in order.iter().enumerate() {
        needed[i] = wrt_keys.contains(&v.key())
            || v.0.parents.iter().any(|p| pos.get(&p.key()).is_some_and(|&j| needed[j]));
    }

    let mut acc: Vec<Option<Var>> = vec![None; order.len()];
    let mut found: HashMap<usize, Var> = HashMap::new();
    if let Some(last) = order.len().checked_sub(1) {
        acc[last] = Some(Var::constant(Tensor::ones(output.shape(), output.dtype())));
    }

    for i in (0..order.len()).rev() {
        let Some(g) = acc[i].take() else { continue };
        let node = &order[i];
        if wrt_keys.contains(&node.key()) {
            found.insert(node.key(), g.clone());
        }
        let need: Vec<bool> = node
            .0
            .parents
            .iter()
            .map(|p| pos.get(&p.key()).is_some_and(|&j| needed[j]))
            .collect();
        if !need.iter().any(|&b| b) {
            continue;
        }
        let parent_grads = backward(node, &g, &need, opts.create_graph)?;
        for (parent, pg) in node.0.parents.iter().zip(parent_grads) {
            let Some(pg) = pg else { continue };
            let j = pos[&parent.key()];
            if !needed[j] {
                continue;
            }
            acc[j] = Some(match acc[j].take() {
                Some(prev) => prev.add(&pg)?,
                None => pg,
            });
        }
    }

    let mut grads = Vec::with_capacity(wrt.len());
    let mut unreachable = Vec::new();
    for (i, w) in wrt.iter().enumerate() {
        match found.get(&w.key()) {
            Some(g) => grads.push(g.clone()),
            None => {
                unreachable.push(i);
                grads.push(Var::constant(Tensor::zeros(w.shape(), w.dtype())));
            }
        }
    }
    if !unreachable.is_empty() {
        log::warn!("{} gradient target(s) unreachable from output", unreachable.len());
    }
    Ok(Gradients { grads, unreachable })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: f64) -> Var {
        Var::leaf(Tensor::scalar(v, DType::F64))
    }

    #[test]
    fn square_derivative() {
        let x = s(3.0);
        let y = x.mul(&x).unwrap();
        let g = grad(&y, &[x.clone()], GradOptions::default()).unwrap();
        assert_eq!(g.grads[0].value().item(), 6.0);
        assert!(!g.has_unreachable());
    }

    #[test]
    fn second_derivative_of_cube() {
        let x = s(2.0);
        let y = x.mul(&x).unwrap().mul(&x).unwrap();
        let g = grad(&y, &[x.clone()], GradOptions { create_graph: true }).unwrap();
        let dg = g.grads[0].value().item();
        assert!((dg - 12.0).abs() < 1e-12);
        let gg = grad(&g.grads[0], &[x.clone()], GradOptions::default()).unwrap();
        assert!((gg.grads[0].value().item() - 12.0).abs() < 1e-12);
    }

    #[test]
    fn unreachable_target_is_flagged_with_zero_gradient() {
        let x = s(1.0);
        let z = s(5.0);
        let y = x.scale(2.0).unwrap();
        let g = grad(&y, &[x, z], GradOptions::default()).unwrap();
        assert_eq!(g.unreachable, vec![1]);
        assert_eq!(g.grads[1].value().item(), 0.0);
    }

    #[test]
    fn without_create_graph_gradients_are_constants() {
        let x = s(2.0);
        let y = x.mul(&x).unwrap();
        let g = grad(&y, &[x], GradOptions::default()).unwrap();
        assert!(!g.grads[0].requires_grad());
    }

    #[test]
    fn shape_errors_name_both_shapes() {
        let a = Var::constant(Tensor::zeros(&[2, 3], DType::F32));
        let b = Var::constant(Tensor::zeros(&[4], DType::F32));
        match a.add(&b) {
            Err(Error::Shape { lhs, rhs, .. }) => {
                assert_eq!(lhs, vec![2, 3]);
                assert_eq!(rhs, vec![4]);
            }
            other => panic!("expected shape error, got {other:?}"),
        }
    }

    #[test]
    fn log_of_zero_is_a_numeric_error() {
        let a = Var::constant(Tensor::zeros(&[2], DType::F64));
        assert!(matches!(a.log(), Err(Error::Numeric { .. })));
    }

    #[test]
    fn deep_chain_drops_without_overflow() {
        let x = s(1.0);
        let mut y = x.clone();
        for _ in 0..200_000 {
            y = y.add_scalar(0.0).unwrap();
        }
        drop(y);
    }
}
