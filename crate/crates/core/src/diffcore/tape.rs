use std::sync::Arc;

use super::kernels;
use super::tensor::Tensor;
use crate::{Error, Real, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A linear map with an exact adjoint, usable as a differentiable op.
pub trait LinearOperator: Send + Sync {
    fn image_shape(&self) -> &[usize];
    fn measurement_shape(&self) -> &[usize];
    fn forward(&self, x: &[Real]) -> Vec<Real>;
    fn adjoint(&self, y: &[Real]) -> Vec<Real>;

    fn apply(&self, x: &Tensor) -> Result<Tensor> {
        check_shape("operator input", x.shape(), self.image_shape())?;
        Tensor::new(self.measurement_shape().to_vec(), self.forward(x.data()))
    }

    fn apply_adjoint(&self, y: &Tensor) -> Result<Tensor> {
        check_shape("adjoint input", y.shape(), self.measurement_shape())?;
        Tensor::new(self.image_shape().to_vec(), self.adjoint(y.data()))
    }
}

fn check_shape(what: &str, got: &[usize], want: &[usize]) -> Result<()> {
    if got != want {
        return Err(Error::dim(format!("{what}: expected {want:?}, got {got:?}")));
    }
    Ok(())
}

/// Backward rule for ops defined outside this module (encodings, operators).
pub trait BackwardRule: Send + Sync {
    fn name(&self) -> &'static str;

    /// Vector-Jacobian products for each input. `needs[i]` is false for inputs
    /// that do not require gradients; those entries may be `None`.
    fn backward(
        &self,
        inputs: &[&Tensor],
        output: &Tensor,
        grad_output: &[Real],
        needs: &[bool],
    ) -> Vec<Option<Vec<Real>>>;
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Relu(Var),
    Sin(Var),
    Scale(Var, Real),
    Concat(Var, Var),
    SliceCols(Var, usize, usize),
    Reshape(Var),
    Sum(Var),
    L1(Var, Var),
    Custom(Vec<Var>, Box<dyn BackwardRule>),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::AddBias(..) => "add_bias",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Relu(_) => "relu",
            Op::Sin(_) => "sin",
            Op::Scale(..) => "scale",
            Op::Concat(..) => "concat",
            Op::SliceCols(..) => "slice_cols",
            Op::Reshape(_) => "reshape",
            Op::Sum(_) => "sum",
            Op::L1(..) => "l1_loss",
            Op::Custom(_, rule) => rule.name(),
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Elementwise op kinds accepted by [`Tape::elementwise`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Elementwise {
    Add,
    Sub,
    Mul,
    Relu,
    Sin,
    Scale(Real),
}

/// Wengert list for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so inputs always precede the
/// nodes that consume them and a single reverse sweep visits each node once.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    first_nonfinite: Option<(usize, &'static str)>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        let id = self.nodes.len();
        if self.first_nonfinite.is_none() && !value.is_finite() {
            self.first_nonfinite = Some((id, op.name()));
        }
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(id)
    }

    fn grad_of(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Records a leaf. Gradients are only produced for leaves with `requires_grad`.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

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

    /// Errors if any recorded value is NaN or infinite.
    pub fn check_finite(&self) -> Result<()> {
        match self.first_nonfinite {
            Some((id, name)) => Err(Error::Numerical(format!(
                "non-finite value produced by `{name}` (node {id})"
            ))),
            None => Ok(()),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.value(a).dims2()?;
        let (k2, n) = self.value(b).dims2()?;
        if k != k2 {
            return Err(Error::dim(format!("matmul inner dims {k} vs {k2}")));
        }
        let out = kernels::matmul(self.value(a).data(), self.value(b).data(), m, k, n);
        let rg = self.grad_of(&[a, b]);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a, b), rg))
    }

    /// Adds a length-C bias to every row of an R×C tensor.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (_, c) = self.value(x).dims2()?;
        if self.value(bias).numel() != c {
            return Err(Error::dim(format!(
                "bias of {} values for {c} columns",
                self.value(bias).numel()
            )));
        }
        let b = self.value(bias).data();
        let mut out = self.value(x).data().to_vec();
        for row in out.chunks_exact_mut(c) {
            for (o, &bv) in row.iter_mut().zip(b) {
                *o += bv;
            }
        }
        let shape = self.value(x).shape().to_vec();
        let rg = self.grad_of(&[x, bias]);
        Ok(self.push(Tensor::new(shape, out)?, Op::AddBias(x, bias), rg))
    }

    /// Fully connected layer `x·W + b`.
    pub fn linear(&mut self, x: Var, weight: Var, bias: Var) -> Result<Var> {
        let h = self.matmul(x, weight)?;
        self.add_bias(h, bias)
    }

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(Real, Real) -> Real) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        let data: Vec<Real> = if ta.shape() == tb.shape() {
            ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect()
        } else if tb.numel() == 1 {
            let y = tb.data()[0];
            ta.data().iter().map(|&x| f(x, y)).collect()
        } else if ta.numel() == 1 {
            let x = ta.data()[0];
            tb.data().iter().map(|&y| f(x, y)).collect()
        } else {
            return Err(Error::dim(format!(
                "cannot broadcast {:?} with {:?}",
                ta.shape(),
                tb.shape()
            )));
        };
        let shape = if ta.numel() >= tb.numel() { ta.shape() } else { tb.shape() };
        Tensor::new(shape.to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary(a, b, |x, y| x + y)?;
        let rg = self.grad_of(&[a, b]);
        Ok(self.push(t, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary(a, b, |x, y| x - y)?;
        let rg = self.grad_of(&[a, b]);
        Ok(self.push(t, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary(a, b, |x, y| x * y)?;
        let rg = self.grad_of(&[a, b]);
        Ok(self.push(t, Op::Mul(a, b), rg))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let t = self.value(x).map(|v| v.max(0.0));
        let rg = self.grad_of(&[x]);
        self.push(t, Op::Relu(x), rg)
    }

    pub fn sin(&mut self, x: Var) -> Var {
        let t = self.value(x).map(Real::sin);
        let rg = self.grad_of(&[x]);
        self.push(t, Op::Sin(x), rg)
    }

    pub fn scale(&mut self, x: Var, s: Real) -> Var {
        let t = self.value(x).map(|v| v * s);
        let rg = self.grad_of(&[x]);
        self.push(t, Op::Scale(x, s), rg)
    }

    /// Dispatches on [`Elementwise`]; binary kinds read `args[0]`, `args[1]`.
    pub fn elementwise(&mut self, kind: Elementwise, args: &[Var]) -> Result<Var> {
        let arity = match kind {
            Elementwise::Add | Elementwise::Sub | Elementwise::Mul => 2,
            _ => 1,
        };
        if args.len() != arity {
            return Err(Error::dim(format!("{kind:?} takes {arity} argument(s)")));
        }
        match kind {
            Elementwise::Add => self.add(args[0], args[1]),
            Elementwise::Sub => self.sub(args[0], args[1]),
            Elementwise::Mul => self.mul(args[0], args[1]),
            Elementwise::Relu => Ok(self.relu(args[0])),
            Elementwise::Sin => Ok(self.sin(args[0])),
            Elementwise::Scale(s) => Ok(self.scale(args[0], s)),
        }
    }

    /// Column-wise concatenation `[a | b]`.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ra, ca) = self.value(a).dims2()?;
        let (rb, cb) = self.value(b).dims2()?;
        if ra != rb {
            return Err(Error::dim(format!("concat row counts {ra} vs {rb}")));
        }
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let mut out = Vec::with_capacity(ra * (ca + cb));
        for r in 0..ra {
            out.extend_from_slice(&da[r * ca..(r + 1) * ca]);
            out.extend_from_slice(&db[r * cb..(r + 1) * cb]);
        }
        let rg = self.grad_of(&[a, b]);
        Ok(self.push(Tensor::new(vec![ra, ca + cb], out)?, Op::Concat(a, b), rg))
    }

    /// Columns `start..end` of a 2-D tensor.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let (r, c) = self.value(x).dims2()?;
        if start >= end || end > c {
            return Err(Error::dim(format!("column range {start}..{end} of {c}")));
        }
        let d = self.value(x).data();
        let w = end - start;
        let mut out = Vec::with_capacity(r * w);
        for row in d.chunks_exact(c) {
            out.extend_from_slice(&row[start..end]);
        }
        let rg = self.grad_of(&[x]);
        Ok(self.push(Tensor::new(vec![r, w], out)?, Op::SliceCols(x, start, end), rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).clone().reshape(shape)?;
        let rg = self.grad_of(&[x]);
        Ok(self.push(t, Op::Reshape(x), rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum() as Real;
        let rg = self.grad_of(&[x]);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    /// Mean absolute deviation between equally shaped tensors.
    pub fn l1_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        let (p, t) = (self.value(pred), self.value(target));
        if p.shape() != t.shape() {
            return Err(Error::dim(format!(
                "l1_loss shapes {:?} vs {:?}",
                p.shape(),
                t.shape()
            )));
        }
        let total: f64 = p
            .data()
            .iter()
            .zip(t.data())
            .map(|(&a, &b)| (a as f64 - b as f64).abs())
            .sum();
        let mean = (total / p.numel() as f64) as Real;
        let rg = self.grad_of(&[pred, target]);
        Ok(self.push(Tensor::scalar(mean), Op::L1(pred, target), rg))
    }

    /// `A(x)`; the backward pass applies the adjoint.
    pub fn apply_operator(&mut self, op: Arc<dyn LinearOperator>, x: Var) -> Result<Var> {
        let y = op.apply(self.value(x))?;
        self.custom(vec![x], y, Box::new(OperatorRule(op)))
    }

    /// Records an op computed elsewhere together with its backward rule.
    pub fn custom(
        &mut self,
        inputs: Vec<Var>,
        output: Tensor,
        rule: Box<dyn BackwardRule>,
    ) -> Result<Var> {
        if let Some(bad) = inputs.iter().find(|v| v.0 >= self.nodes.len()) {
            return Err(Error::Lookup(format!("unknown var {}", bad.0)));
        }
        let rg = self.grad_of(&inputs);
        Ok(self.push(output, Op::Custom(inputs, rule), rg))
    }

    /// Reverse sweep from a single-element `root`.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        self.check_finite()?;
        if self.value(root).numel() != 1 {
            return Err(Error::dim(format!(
                "backward root must be scalar, got {:?}",
                self.value(root).shape()
            )));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<Real>>> = Vec::new();
        grads.resize_with(n, || None);
        let mut leaves: Vec<Option<Tensor>> = Vec::new();
        leaves.resize_with(n, || None);
        if !self.nodes[root.0].requires_grad {
            return Ok(Gradients { grads: leaves });
        }
        grads[root.0] = Some(vec![1.0]);

        for id in (0..=root.0).rev() {
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else {
                continue;
            };
            let needs = |v: &Var| self.nodes[v.0].requires_grad;
            match &node.op {
                Op::Leaf => {
                    leaves[id] = Some(Tensor::new(node.value.shape().to_vec(), g)?);
                }
                Op::MatMul(a, b) => {
                    let (m, k) = self.value(*a).dims2()?;
                    let (_, nn) = self.value(*b).dims2()?;
                    if needs(a) {
                        let da = kernels::matmul_bt(&g, self.value(*b).data(), m, k, nn);
                        accumulate(&mut grads[a.0], da);
                    }
                    if needs(b) {
                        let db = kernels::matmul_at(self.value(*a).data(), &g, m, k, nn);
                        accumulate(&mut grads[b.0], db);
                    }
                }
                Op::AddBias(x, b) => {
                    if needs(b) {
                        let c = self.value(*b).numel();
                        let mut db = vec![0.0; c];
                        for row in g.chunks_exact(c) {
                            for (d, &v) in db.iter_mut().zip(row) {
                                *d += v;
                            }
                        }
                        accumulate(&mut grads[b.0], db);
                    }
                    if needs(x) {
                        accumulate(&mut grads[x.0], g);
                    }
                }
                Op::Add(a, b) | Op::Sub(a, b) => {
                    let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                    if needs(b) {
                        let gb: Vec<Real> = g.iter().map(|&v| sign * v).collect();
                        accumulate(&mut grads[b.0], reduce_to(gb, self.value(*b)));
                    }
                    if needs(a) {
                        accumulate(&mut grads[a.0], reduce_to(g, self.value(*a)));
                    }
                }
                Op::Mul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let pick = |t: &Tensor, i: usize| {
                        if t.numel() == 1 {
                            t.data()[0]
                        } else {
                            t.data()[i]
                        }
                    };
                    if needs(a) {
                        let ga = g.iter().enumerate().map(|(i, &v)| v * pick(tb, i)).collect();
                        accumulate(&mut grads[a.0], reduce_to(ga, ta));
                    }
                    if needs(b) {
                        let gb = g.iter().enumerate().map(|(i, &v)| v * pick(ta, i)).collect();
                        accumulate(&mut grads[b.0], reduce_to(gb, tb));
                    }
                }
                Op::Relu(x) => {
                    let out = node.value.data();
                    let gx = g
                        .iter()
                        .zip(out)
                        .map(|(&v, &o)| if o > 0.0 { v } else { 0.0 })
                        .collect();
                    accumulate(&mut grads[x.0], gx);
                }
                Op::Sin(x) => {
                    let xs = self.value(*x).data();
                    let gx = g.iter().zip(xs).map(|(&v, &xv)| v * xv.cos()).collect();
                    accumulate(&mut grads[x.0], gx);
                }
                Op::Scale(x, s) => {
                    let gx = g.iter().map(|&v| v * s).collect();
                    accumulate(&mut grads[x.0], gx);
                }
                Op::Concat(a, b) => {
                    let (r, ca) = self.value(*a).dims2()?;
                    let cb = self.value(*b).dims2()?.1;
                    let w = ca + cb;
                    if needs(a) {
                        let mut ga = Vec::with_capacity(r * ca);
                        for row in g.chunks_exact(w) {
                            ga.extend_from_slice(&row[..ca]);
                        }
                        accumulate(&mut grads[a.0], ga);
                    }
                    if needs(b) {
                        let mut gb = Vec::with_capacity(r * cb);
                        for row in g.chunks_exact(w) {
                            gb.extend_from_slice(&row[ca..]);
                        }
                        accumulate(&mut grads[b.0], gb);
                    }
                }
                Op::SliceCols(x, start, end) => {
                    let (_, c) = self.value(*x).dims2()?;
                    let w = end - start;
                    let mut gx = vec![0.0; self.value(*x).numel()];
                    for (dst, src) in gx.chunks_exact_mut(c).zip(g.chunks_exact(w)) {
                        dst[*start..*end].copy_from_slice(src);
                    }
                    accumulate(&mut grads[x.0], gx);
                }
                Op::Reshape(x) => accumulate(&mut grads[x.0], g),
                Op::Sum(x) => {
                    let gx = vec![g[0]; self.value(*x).numel()];
                    accumulate(&mut grads[x.0], gx);
                }
                Op::L1(p, t) => {
                    let (tp, tt) = (self.value(*p), self.value(*t));
                    let scale = g[0] / tp.numel() as Real;
                    let gp: Vec<Real> = tp
                        .data()
                        .iter()
                        .zip(tt.data())
                        .map(|(&a, &b)| scale * sign(a - b))
                        .collect();
                    if needs(t) {
                        accumulate(&mut grads[t.0], gp.iter().map(|v| -v).collect());
                    }
                    if needs(p) {
                        accumulate(&mut grads[p.0], gp);
                    }
                }
                Op::Custom(inputs, rule) => {
                    let vals: Vec<&Tensor> = inputs.iter().map(|v| self.value(*v)).collect();
                    let want: Vec<bool> = inputs.iter().map(needs).collect();
                    let out = rule.backward(&vals, &node.value, &g, &want);
                    for ((v, w), gi) in inputs.iter().zip(&want).zip(out) {
                        if let (true, Some(gi)) = (*w, gi) {
                            if gi.len() != self.value(*v).numel() {
                                return Err(Error::dim(format!(
                                    "`{}` returned a gradient of {} values for an input of {}",
                                    rule.name(),
                                    gi.len(),
                                    self.value(*v).numel()
                                )));
                            }
                            accumulate(&mut grads[v.0], gi);
                        }
                    }
                }
            }
        }
        Ok(Gradients { grads: leaves })
    }
}

fn sign(x: Real) -> Real {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn accumulate(slot: &mut Option<Vec<Real>>, g: Vec<Real>) {
    match slot {
        Some(acc) => {
            for (a, v) in acc.iter_mut().zip(g) {
                *a += v;
            }
        }
        None => *slot = Some(g),
    }
}

/// Sums a broadcast gradient back down to a scalar operand.
fn reduce_to(g: Vec<Real>, operand: &Tensor) -> Vec<Real> {
    if operand.numel() == 1 && g.len() != 1 {
        vec![g.iter().map(|&v| v as f64).sum::<f64>() as Real]
    } else {
        g
    }
}

struct OperatorRule(Arc<dyn LinearOperator>);

impl BackwardRule for OperatorRule {
    fn name(&self) -> &'static str {
        "linear_operator"
    }

    fn backward(
        &self,
        _inputs: &[&Tensor],
        _output: &Tensor,
        grad_output: &[Real],
        needs: &[bool],
    ) -> Vec<Option<Vec<Real>>> {
        vec![needs[0].then(|| self.0.adjoint(grad_output))]
    }
}

/// Leaf gradients produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of a leaf, or `None` if it does not require gradients or
    /// does not influence the root.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }

    /// Gradient of a leaf, zeros if it did not influence the root.
    pub fn get_or_zeros(&self, v: Var, like: &Tensor) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(like.shape()))
    }
}
