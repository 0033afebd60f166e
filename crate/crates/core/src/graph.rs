//! Tape-based reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! A [`Graph`] records every operation as a node holding its output value.
//! [`Var`] is a copyable handle into the graph. Calling [`Graph::backward`] on
//! a scalar node walks the tape in reverse creation order (a valid reverse
//! topological order, since parents are always created before children) and
//! accumulates gradients by summation over every use of a node.
//!
//! All ops are functional: node values are never mutated after creation.
//! Every op checks its output for NaN/infinity and reports
//! [`Error::NonFinite`] instead of recording a poisoned value.

use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;
use core::cell::RefCell;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::kernels::{gemm, plan_broadcast, split_axis, Broadcast, MatRef};
use crate::spline::SplineGrid;
use crate::tensor::{numel, Tensor};

/// Fixed epsilon added to the variance inside layer normalization.
pub const LAYER_NORM_EPS: f64 = 1e-6;

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Unary elementwise functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryKind {
    Sigmoid,
    Tanh,
    /// ELU with alpha = 1.
    Elu,
    Silu,
    Relu,
    Exp,
    Square,
    Neg,
}

/// Binary elementwise functions (numpy-style broadcasting).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryKind {
    Add,
    Sub,
    Mul,
    Div,
}

/// Every elementwise op, addressable by name for [`Graph::elementwise`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementwiseKind {
    Unary(UnaryKind),
    Binary(BinaryKind),
}

impl FromStr for ElementwiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        use BinaryKind::*;
        use UnaryKind::*;
        let kind = match s.to_ascii_lowercase().as_str() {
            "sigmoid" => ElementwiseKind::Unary(Sigmoid),
            "tanh" => ElementwiseKind::Unary(Tanh),
            "elu" => ElementwiseKind::Unary(Elu),
            "silu" | "swish" => ElementwiseKind::Unary(Silu),
            "relu" => ElementwiseKind::Unary(Relu),
            "exp" => ElementwiseKind::Unary(Exp),
            "square" => ElementwiseKind::Unary(Square),
            "neg" => ElementwiseKind::Unary(Neg),
            "add" => ElementwiseKind::Binary(Add),
            "sub" | "subtract" => ElementwiseKind::Binary(Sub),
            "mul" | "multiply" => ElementwiseKind::Binary(Mul),
            "div" | "divide" => ElementwiseKind::Binary(Div),
            other => return Err(Error::Invalid(alloc::format!("unknown op kind `{other}`"))),
        };
        Ok(kind)
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

impl UnaryKind {
    fn name(self) -> &'static str {
        match self {
            UnaryKind::Sigmoid => "sigmoid",
            UnaryKind::Tanh => "tanh",
            UnaryKind::Elu => "elu",
            UnaryKind::Silu => "silu",
            UnaryKind::Relu => "relu",
            UnaryKind::Exp => "exp",
            UnaryKind::Square => "square",
            UnaryKind::Neg => "neg",
        }
    }

    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            UnaryKind::Sigmoid => sigmoid(x),
            UnaryKind::Tanh => libm::tanh(x),
            UnaryKind::Elu => {
                if x > 0.0 {
                    x
                } else {
                    libm::expm1(x)
                }
            }
            UnaryKind::Silu => x * sigmoid(x),
            UnaryKind::Relu => x.max(0.0),
            UnaryKind::Exp => libm::exp(x),
            UnaryKind::Square => x * x,
            UnaryKind::Neg => -x,
        }
    }

    /// Derivative given input `x` and output `y`.
    #[inline]
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            UnaryKind::Sigmoid => y * (1.0 - y),
            UnaryKind::Tanh => 1.0 - y * y,
            UnaryKind::Elu => {
                if x > 0.0 {
                    1.0
                } else {
                    y + 1.0
                }
            }
            UnaryKind::Silu => {
                let s = sigmoid(x);
                s * (1.0 + x * (1.0 - s))
            }
            UnaryKind::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            UnaryKind::Exp => y,
            UnaryKind::Square => 2.0 * x,
            UnaryKind::Neg => -1.0,
        }
    }
}

impl BinaryKind {
    fn name(self) -> &'static str {
        match self {
            BinaryKind::Add => "add",
            BinaryKind::Sub => "sub",
            BinaryKind::Mul => "mul",
            BinaryKind::Div => "div",
        }
    }

    #[inline]
    fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            BinaryKind::Add => a + b,
            BinaryKind::Sub => a - b,
            BinaryKind::Mul => a * b,
            BinaryKind::Div => a / b,
        }
    }
}

enum Op {
    Leaf,
    /// `[.., k] x [k, n]` (or `[n, k]` transposed) with leading dims folded into `m`.
    MatMul {
        a: usize,
        b: usize,
        b_transposed: bool,
        m: usize,
        k: usize,
        n: usize,
    },
    /// Batched `[B, m, k] x [B, k, n]` (or `[B, n, k]` transposed).
    BatchMatMul {
        a: usize,
        b: usize,
        b_transposed: bool,
        batch: usize,
        m: usize,
        k: usize,
        n: usize,
    },
    Unary {
        kind: UnaryKind,
        x: usize,
    },
    Binary {
        kind: BinaryKind,
        a: usize,
        b: usize,
        plan: Broadcast,
    },
    Affine {
        x: usize,
        scale: f64,
    },
    Softmax {
        x: usize,
        outer: usize,
        n: usize,
        inner: usize,
    },
    LayerNorm {
        x: usize,
        gain: usize,
        bias: usize,
        d: usize,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Sum {
        x: usize,
    },
    SumAxis {
        x: usize,
        outer: usize,
        n: usize,
        inner: usize,
    },
    Reshape {
        x: usize,
    },
    Concat {
        parts: Vec<(usize, usize)>,
        outer: usize,
        total: usize,
        inner: usize,
    },
    Narrow {
        x: usize,
        outer: usize,
        n: usize,
        start: usize,
        len: usize,
        inner: usize,
    },
    BSpline {
        x: usize,
        grid: SplineGrid,
    },
    Permute {
        x: usize,
        perm: Vec<usize>,
    },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul { .. } => "matmul",
            Op::BatchMatMul { .. } => "batch_matmul",
            Op::Unary { kind, .. } => kind.name(),
            Op::Binary { kind, .. } => kind.name(),
            Op::Affine { .. } => "affine",
            Op::Softmax { .. } => "softmax",
            Op::LayerNorm { .. } => "layer_norm",
            Op::Sum { .. } => "sum",
            Op::SumAxis { .. } => "sum_axis",
            Op::Reshape { .. } => "reshape",
            Op::Concat { .. } => "concat",
            Op::Narrow { .. } => "narrow",
            Op::BSpline { .. } => "bspline_basis",
            Op::Permute { .. } => "permute",
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// A single-threaded differentiation tape.
#[derive(Default)]
pub struct Graph {
    nodes: RefCell<Vec<Node>>,
}

/// Gradients produced by [`Graph::backward`], indexed by node.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient with respect to `v`, shaped like `v`. Nodes that do not
    /// influence the loss (or do not require gradients) get zeros.
    pub fn wrt(&self, v: Var) -> Tensor {
        let shape = self.shapes[v.0].clone();
        match &self.grads[v.0] {
            Some(g) => Tensor::from_parts(shape, g.clone()),
            None => Tensor::zeros(&shape),
        }
    }

    /// Moves the gradient of `v` out, leaving zeros behind.
    pub fn take(&mut self, v: Var) -> Tensor {
        let shape = self.shapes[v.0].clone();
        match self.grads[v.0].take() {
            Some(g) => Tensor::from_parts(shape, g),
            None => Tensor::zeros(&shape),
        }
    }
}

fn permute_data(shape: &[usize], src: &[f64], perm: &[usize]) -> (Vec<usize>, Vec<f64>) {
    let rank = shape.len();
    let mut strides = vec![1; rank];
    for i in (0..rank.saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let out_strides: Vec<usize> = perm.iter().map(|&p| strides[p]).collect();
    let mut out = Vec::with_capacity(src.len());
    let mut idx = vec![0usize; rank];
    let mut offset = 0usize;
    for _ in 0..src.len() {
        out.push(src[offset]);
        // odometer increment over the output index, tracking the input offset
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            offset += out_strides[ax];
            if idx[ax] < out_shape[ax] {
                break;
            }
            offset -= out_strides[ax] * out_shape[ax];
            idx[ax] = 0;
        }
    }
    (out_shape, out)
}

/// `x - x` is NaN exactly for NaN and infinities, so one branch-free
/// reduction checks a whole buffer.
#[allow(clippy::eq_op)]
fn all_finite(data: &[f64]) -> bool {
    let mut lanes = [0.0f64; 8];
    let mut chunks = data.chunks_exact(8);
    for c in &mut chunks {
        for (l, &v) in lanes.iter_mut().zip(c) {
            *l += v - v;
        }
    }
    let tail: f64 = chunks.remainder().iter().map(|&v| v - v).sum();
    (lanes.iter().sum::<f64>() + tail) == 0.0
}

/// Adds `f(i)` to every element of a same-sized gradient, creating it on first use.
fn add_elementwise(slot: &mut Option<Vec<f64>>, len: usize, f: impl Fn(usize) -> f64) {
    match slot {
        Some(v) => v.iter_mut().enumerate().for_each(|(i, d)| *d += f(i)),
        None => *slot = Some((0..len).map(f).collect()),
    }
}

fn accumulate(slot: &mut Option<Vec<f64>>, len: usize) -> &mut Vec<f64> {
    slot.get_or_insert_with(|| vec![0.0; len])
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op) -> Result<Var> {
        if !all_finite(value.data()) {
            return Err(Error::NonFinite { op: op.name() });
        }
        let mut nodes = self.nodes.borrow_mut();
        let requires_grad = match &op {
            Op::Leaf => false,
            Op::MatMul { a, b, .. } | Op::BatchMatMul { a, b, .. } | Op::Binary { a, b, .. } => {
                nodes[*a].requires_grad || nodes[*b].requires_grad
            }
            Op::LayerNorm { x, gain, bias, .. } => {
                nodes[*x].requires_grad || nodes[*gain].requires_grad || nodes[*bias].requires_grad
            }
            Op::Concat { parts, .. } => parts.iter().any(|&(p, _)| nodes[p].requires_grad),
            Op::Unary { x, .. }
            | Op::Affine { x, .. }
            | Op::Softmax { x, .. }
            | Op::Sum { x }
            | Op::SumAxis { x, .. }
            | Op::Reshape { x }
            | Op::Narrow { x, .. }
            | Op::BSpline { x, .. }
            | Op::Permute { x, .. } => nodes[*x].requires_grad,
        };
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(nodes.len() - 1))
    }

    fn leaf(&self, value: Tensor, requires_grad: bool) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(nodes.len() - 1)
    }

    /// A grad-enabled leaf (trainable parameter or input under test).
    pub fn param(&self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    /// A leaf that never receives gradients (data, fixed masks).
    pub fn constant(&self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> Tensor {
        self.nodes.borrow()[v.0].value.clone()
    }

    pub fn shape(&self, v: Var) -> Vec<usize> {
        self.nodes.borrow()[v.0].value.shape().to_vec()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes.borrow()[v.0].requires_grad
    }

    // ---------------------------------------------------------------- matmul

    /// `a @ b` for `a: [.., k]`, `b: [k, n]`; leading dims of `a` are kept.
    pub fn matmul(&self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, false)
    }

    /// `a @ b^T` for `a: [.., k]`, `b: [n, k]`.
    pub fn matmul_nt(&self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, true)
    }

    fn matmul_impl(&self, a: Var, b: Var, b_transposed: bool) -> Result<Var> {
        let (value, op) = {
            let nodes = self.nodes.borrow();
            let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
            let (sa, sb) = (av.shape(), bv.shape());
            let op_name = if b_transposed { "matmul_nt" } else { "matmul" };
            if sb.len() != 2 {
                return Err(Error::shape(op_name, sa, sb));
            }
            let k = *sa.last().unwrap();
            let (bk, n) = if b_transposed { (sb[1], sb[0]) } else { (sb[0], sb[1]) };
            if k != bk {
                return Err(Error::shape(op_name, sa, sb));
            }
            let m = av.len() / k;
            let mut out = vec![0.0; m * n];
            let bref = if b_transposed {
                MatRef::transposed(bv.data(), k)
            } else {
                MatRef::rows(bv.data(), n)
            };
            gemm(m, k, n, MatRef::rows(av.data(), k), bref, 0.0, &mut out);
            let mut shape = if sa.len() == 1 {
                vec![1]
            } else {
                sa[..sa.len() - 1].to_vec()
            };
            shape.push(n);
            (
                Tensor::from_parts(shape, out),
                Op::MatMul {
                    a: a.0,
                    b: b.0,
                    b_transposed,
                    m,
                    k,
                    n,
                },
            )
        };
        self.push(value, op)
    }

    /// Batched `a @ b` for `a: [B, m, k]`, `b: [B, k, n]`.
    pub fn batch_matmul(&self, a: Var, b: Var) -> Result<Var> {
        self.batch_matmul_impl(a, b, false)
    }

    /// Batched `a @ b^T` for `a: [B, m, k]`, `b: [B, n, k]`.
    pub fn batch_matmul_nt(&self, a: Var, b: Var) -> Result<Var> {
        self.batch_matmul_impl(a, b, true)
    }

    fn batch_matmul_impl(&self, a: Var, b: Var, b_transposed: bool) -> Result<Var> {
        let (value, op) = {
            let nodes = self.nodes.borrow();
            let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
            let (sa, sb) = (av.shape(), bv.shape());
            if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] {
                return Err(Error::shape("batch_matmul", sa, sb));
            }
            let (batch, m, k) = (sa[0], sa[1], sa[2]);
            let (bk, n) = if b_transposed { (sb[2], sb[1]) } else { (sb[1], sb[2]) };
            if k != bk {
                return Err(Error::shape("batch_matmul", sa, sb));
            }
            let mut out = vec![0.0; batch * m * n];
            for i in 0..batch {
                let ad = &av.data()[i * m * k..(i + 1) * m * k];
                let bd = &bv.data()[i * k * n..(i + 1) * k * n];
                let bref = if b_transposed {
                    MatRef::transposed(bd, k)
                } else {
                    MatRef::rows(bd, n)
                };
                gemm(
                    m,
                    k,
                    n,
                    MatRef::rows(ad, k),
                    bref,
                    0.0,
                    &mut out[i * m * n..(i + 1) * m * n],
                );
            }
            (
                Tensor::from_parts(vec![batch, m, n], out),
                Op::BatchMatMul {
                    a: a.0,
                    b: b.0,
                    b_transposed,
                    batch,
                    m,
                    k,
                    n,
                },
            )
        };
        self.push(value, op)
    }

    // ----------------------------------------------------------- elementwise

    /// Applies a named elementwise op; `y` must be given exactly for binary kinds.
    pub fn elementwise(&self, kind: ElementwiseKind, x: Var, y: Option<Var>) -> Result<Var> {
        match (kind, y) {
            (ElementwiseKind::Unary(k), None) => self.unary(k, x),
            (ElementwiseKind::Binary(k), Some(y)) => self.binary(k, x, y),
            (ElementwiseKind::Unary(k), Some(_)) => Err(Error::Invalid(alloc::format!(
                "{} is unary but two operands were given",
                k.name()
            ))),
            (ElementwiseKind::Binary(k), None) => Err(Error::Invalid(alloc::format!(
                "{} is binary but one operand was given",
                k.name()
            ))),
        }
    }

    pub fn unary(&self, kind: UnaryKind, x: Var) -> Result<Var> {
        let value = {
            let nodes = self.nodes.borrow();
            let xv = &nodes[x.0].value;
            let data = xv.data().iter().map(|&v| kind.apply(v)).collect();
            Tensor::from_parts(xv.shape().to_vec(), data)
        };
        self.push(value, Op::Unary { kind, x: x.0 })
    }

    pub fn binary(&self, kind: BinaryKind, a: Var, b: Var) -> Result<Var> {
        let (value, plan) = {
            let nodes = self.nodes.borrow();
            let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
            let (shape, plan) = plan_broadcast(kind.name(), av.shape(), bv.shape())?;
            let (ad, bd) = (av.data(), bv.data());
            let total = numel(&shape);
            let data: Vec<f64> = if matches!(plan, Broadcast::Same) {
                ad.iter().zip(bd).map(|(&x, &y)| kind.apply(x, y)).collect()
            } else {
                let mut data = vec![0.0; total];
                plan.for_each(total, ad.len(), bd.len(), |i, ia, ib| {
                    data[i] = kind.apply(ad[ia], bd[ib])
                });
                data
            };
            (Tensor::from_parts(shape, data), plan)
        };
        self.push(
            value,
            Op::Binary {
                kind,
                a: a.0,
                b: b.0,
                plan,
            },
        )
    }

    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Add, a, b)
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Sub, a, b)
    }

    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Mul, a, b)
    }

    pub fn div(&self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Div, a, b)
    }

    pub fn sigmoid(&self, x: Var) -> Result<Var> {
        self.unary(UnaryKind::Sigmoid, x)
    }

    pub fn tanh(&self, x: Var) -> Result<Var> {
        self.unary(UnaryKind::Tanh, x)
    }

    pub fn elu(&self, x: Var) -> Result<Var> {
        self.unary(UnaryKind::Elu, x)
    }

    pub fn silu(&self, x: Var) -> Result<Var> {
        self.unary(UnaryKind::Silu, x)
    }

    pub fn relu(&self, x: Var) -> Result<Var> {
        self.unary(UnaryKind::Relu, x)
    }

    pub fn exp(&self, x: Var) -> Result<Var> {
        self.unary(UnaryKind::Exp, x)
    }

    pub fn square(&self, x: Var) -> Result<Var> {
        self.unary(UnaryKind::Square, x)
    }

    /// `scale * x + shift` with constant coefficients.
    pub fn affine(&self, x: Var, scale: f64, shift: f64) -> Result<Var> {
        let value = {
            let nodes = self.nodes.borrow();
            let xv = &nodes[x.0].value;
            let data = xv.data().iter().map(|&v| scale * v + shift).collect();
            Tensor::from_parts(xv.shape().to_vec(), data)
        };
        self.push(value, Op::Affine { x: x.0, scale })
    }

    pub fn scale(&self, x: Var, c: f64) -> Result<Var> {
        self.affine(x, c, 0.0)
    }

    // ------------------------------------------------------------ reductions

    /// Softmax along `axis`, computed with max subtraction.
    pub fn softmax(&self, x: Var, axis: usize) -> Result<Var> {
        let (value, op) = {
            let nodes = self.nodes.borrow();
            let xv = &nodes[x.0].value;
            if axis >= xv.rank() {
                return Err(Error::Invalid(alloc::format!(
                    "softmax axis {axis} out of range for shape {:?}",
                    xv.shape()
                )));
            }
            let (outer, n, inner) = split_axis(xv.shape(), axis);
            let src = xv.data();
            let mut out = vec![0.0; src.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let base = o * n * inner + i;
                    let mut mx = f64::NEG_INFINITY;
                    for j in 0..n {
                        mx = mx.max(src[base + j * inner]);
                    }
                    let mut total = 0.0;
                    for j in 0..n {
                        let e = libm::exp(src[base + j * inner] - mx);
                        out[base + j * inner] = e;
                        total += e;
                    }
                    for j in 0..n {
                        out[base + j * inner] /= total;
                    }
                }
            }
            (
                Tensor::from_parts(xv.shape().to_vec(), out),
                Op::Softmax {
                    x: x.0,
                    outer,
                    n,
                    inner,
                },
            )
        };
        self.push(value, op)
    }

    /// Softmax over the last axis.
    pub fn softmax_last(&self, x: Var) -> Result<Var> {
        let rank = self.shape(x).len();
        self.softmax(x, rank - 1)
    }

    /// Layer normalization over the last axis (`d >= 2`) with an affine map.
    pub fn layer_norm(&self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let (value, op) = {
            let nodes = self.nodes.borrow();
            let (xv, gv, bv) = (&nodes[x.0].value, &nodes[gain.0].value, &nodes[bias.0].value);
            let d = *xv.shape().last().unwrap();
            if d < 2 {
                return Err(Error::Invalid(alloc::format!(
                    "layer_norm needs a last axis of at least 2, got shape {:?}",
                    xv.shape()
                )));
            }
            if gv.shape() != [d] || bv.shape() != [d] {
                return Err(Error::shape("layer_norm", xv.shape(), gv.shape()));
            }
            let rows = xv.len() / d;
            let mut xhat = vec![0.0; xv.len()];
            let mut inv_std = vec![0.0; rows];
            let mut out = vec![0.0; xv.len()];
            for r in 0..rows {
                let row = &xv.data()[r * d..(r + 1) * d];
                let mean = row.iter().sum::<f64>() / d as f64;
                let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
                let is = 1.0 / libm::sqrt(var + LAYER_NORM_EPS);
                inv_std[r] = is;
                for j in 0..d {
                    let h = (row[j] - mean) * is;
                    xhat[r * d + j] = h;
                    out[r * d + j] = gv.data()[j] * h + bv.data()[j];
                }
            }
            (
                Tensor::from_parts(xv.shape().to_vec(), out),
                Op::LayerNorm {
                    x: x.0,
                    gain: gain.0,
                    bias: bias.0,
                    d,
                    xhat,
                    inv_std,
                },
            )
        };
        self.push(value, op)
    }

    /// Sum of all elements, as a `[1]` tensor.
    pub fn sum(&self, x: Var) -> Result<Var> {
        let total = self.nodes.borrow()[x.0].value.data().iter().sum::<f64>();
        self.push(Tensor::scalar(total), Op::Sum { x: x.0 })
    }

    pub fn mean(&self, x: Var) -> Result<Var> {
        let n = numel(&self.shape(x)) as f64;
        let s = self.sum(x)?;
        self.scale(s, 1.0 / n)
    }

    /// Sums out `axis`; a result of rank 0 is represented as `[1]`.
    pub fn sum_axis(&self, x: Var, axis: usize) -> Result<Var> {
        let (value, op) = {
            let nodes = self.nodes.borrow();
            let xv = &nodes[x.0].value;
            if axis >= xv.rank() {
                return Err(Error::Invalid(alloc::format!("sum_axis axis {axis} out of range")));
            }
            let (outer, n, inner) = split_axis(xv.shape(), axis);
            let mut out = vec![0.0; outer * inner];
            for o in 0..outer {
                for j in 0..n {
                    let src = &xv.data()[(o * n + j) * inner..(o * n + j + 1) * inner];
                    for (dst, s) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                        *dst += s;
                    }
                }
            }
            let mut shape: Vec<usize> = xv.shape().to_vec();
            shape.remove(axis);
            if shape.is_empty() {
                shape.push(1);
            }
            (
                Tensor::from_parts(shape, out),
                Op::SumAxis {
                    x: x.0,
                    outer,
                    n,
                    inner,
                },
            )
        };
        self.push(value, op)
    }

    // ---------------------------------------------------------------- layout

    pub fn reshape(&self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.nodes.borrow()[x.0].value.reshape(shape)?;
        self.push(value, Op::Reshape { x: x.0 })
    }

    /// Concatenates along `axis`; all other dims must agree.
    pub fn concat(&self, parts: &[Var], axis: usize) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::Invalid("concat of zero tensors".to_string()));
        }
        let (value, op) = {
            let nodes = self.nodes.borrow();
            let first = nodes[parts[0].0].value.shape();
            if axis >= first.len() {
                return Err(Error::Invalid(alloc::format!("concat axis {axis} out of range")));
            }
            let (outer, _, inner) = split_axis(first, axis);
            let mut sizes = Vec::with_capacity(parts.len());
            for p in parts {
                let s = nodes[p.0].value.shape();
                if s.len() != first.len() || s[..axis] != first[..axis] || s[axis + 1..] != first[axis + 1..] {
                    return Err(Error::shape("concat", first, s));
                }
                sizes.push(s[axis]);
            }
            let total: usize = sizes.iter().sum();
            let mut out = Vec::with_capacity(outer * total * inner);
            for o in 0..outer {
                for (p, &n) in parts.iter().zip(&sizes) {
                    let d = nodes[p.0].value.data();
                    out.extend_from_slice(&d[o * n * inner..(o + 1) * n * inner]);
                }
            }
            let mut shape = first.to_vec();
            shape[axis] = total;
            (
                Tensor::from_parts(shape, out),
                Op::Concat {
                    parts: parts.iter().map(|p| p.0).zip(sizes).collect(),
                    outer,
                    total,
                    inner,
                },
            )
        };
        self.push(value, op)
    }

    /// The slice `start..start + len` along `axis`.
    pub fn narrow(&self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let (value, op) = {
            let nodes = self.nodes.borrow();
            let xv = &nodes[x.0].value;
            if axis >= xv.rank() || len == 0 || start + len > xv.shape()[axis] {
                return Err(Error::Invalid(alloc::format!(
                    "narrow({axis}, {start}, {len}) out of range for shape {:?}",
                    xv.shape()
                )));
            }
            let (outer, n, inner) = split_axis(xv.shape(), axis);
            let mut out = Vec::with_capacity(outer * len * inner);
            for o in 0..outer {
                let base = (o * n + start) * inner;
                out.extend_from_slice(&xv.data()[base..base + len * inner]);
            }
            let mut shape = xv.shape().to_vec();
            shape[axis] = len;
            (
                Tensor::from_parts(shape, out),
                Op::Narrow {
                    x: x.0,
                    outer,
                    n,
                    start,
                    len,
                    inner,
                },
            )
        };
        self.push(value, op)
    }

    /// B-spline basis values: `[..]` to `[.., n_basis]`, clamping out-of-range inputs.
    pub fn bspline_basis(&self, x: Var, grid: &SplineGrid) -> Result<Var> {
        let value = {
            let nodes = self.nodes.borrow();
            let xv = &nodes[x.0].value;
            let nb = grid.num_basis();
            let mut out = vec![0.0; xv.len() * nb];
            for (i, &v) in xv.data().iter().enumerate() {
                grid.basis_into(v, &mut out[i * nb..(i + 1) * nb]);
            }
            let mut shape = xv.shape().to_vec();
            shape.push(nb);
            Tensor::from_parts(shape, out)
        };
        self.push(
            value,
            Op::BSpline {
                x: x.0,
                grid: grid.clone(),
            },
        )
    }

    /// Reorders axes: output axis `i` is input axis `perm[i]`.
    pub fn permute(&self, x: Var, perm: &[usize]) -> Result<Var> {
        let value = {
            let nodes = self.nodes.borrow();
            let xv = &nodes[x.0].value;
            let mut seen = vec![false; xv.rank()];
            let valid = perm.len() == xv.rank()
                && perm
                    .iter()
                    .all(|&p| p < seen.len() && !core::mem::replace(&mut seen[p], true));
            if !valid {
                return Err(Error::Invalid(alloc::format!(
                    "permutation {perm:?} does not match shape {:?}",
                    xv.shape()
                )));
            }
            let (shape, data) = permute_data(xv.shape(), xv.data(), perm);
            Tensor::from_parts(shape, data)
        };
        self.push(
            value,
            Op::Permute {
                x: x.0,
                perm: perm.to_vec(),
            },
        )
    }

    // -------------------------------------------------------------- backward

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        let lv = &nodes[loss.0].value;
        if lv.len() != 1 {
            return Err(Error::shape("backward (loss must be scalar)", lv.shape(), &[1]));
        }
        let count = loss.0 + 1;
        let mut grads: Vec<Option<Vec<f64>>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..count).rev() {
            let node = &nodes[idx];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.backward_node(&nodes, node, &g, &mut grads);
        }
        let shapes = nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { grads, shapes })
    }

    fn backward_node(&self, nodes: &[Node], node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let needs = |i: usize| nodes[i].requires_grad;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul {
                a,
                b,
                b_transposed,
                m,
                k,
                n,
            } => {
                let (m, k, n) = (*m, *k, *n);
                let av = nodes[*a].value.data();
                let bv = nodes[*b].value.data();
                if needs(*a) {
                    let ga = accumulate(&mut grads[*a], m * k);
                    // dA = dC op(B)^T
                    let bt = if *b_transposed {
                        MatRef::rows(bv, k)
                    } else {
                        MatRef::transposed(bv, n)
                    };
                    gemm(m, n, k, MatRef::rows(g, n), bt, 1.0, ga);
                }
                if needs(*b) {
                    let gb = accumulate(&mut grads[*b], k * n);
                    if *b_transposed {
                        // dB [n,k] = dC^T A
                        gemm(n, m, k, MatRef::transposed(g, n), MatRef::rows(av, k), 1.0, gb);
                    } else {
                        // dB [k,n] = A^T dC
                        gemm(k, m, n, MatRef::transposed(av, k), MatRef::rows(g, n), 1.0, gb);
                    }
                }
            }
            Op::BatchMatMul {
                a,
                b,
                b_transposed,
                batch,
                m,
                k,
                n,
            } => {
                let (m, k, n) = (*m, *k, *n);
                let av = nodes[*a].value.data();
                let bv = nodes[*b].value.data();
                for i in 0..*batch {
                    let gi = &g[i * m * n..(i + 1) * m * n];
                    let ai = &av[i * m * k..(i + 1) * m * k];
                    let bi = &bv[i * k * n..(i + 1) * k * n];
                    if needs(*a) {
                        let ga = accumulate(&mut grads[*a], *batch * m * k);
                        let bt = if *b_transposed {
                            MatRef::rows(bi, k)
                        } else {
                            MatRef::transposed(bi, n)
                        };
                        gemm(
                            m,
                            n,
                            k,
                            MatRef::rows(gi, n),
                            bt,
                            1.0,
                            &mut ga[i * m * k..(i + 1) * m * k],
                        );
                    }
                    if needs(*b) {
                        let gb = accumulate(&mut grads[*b], *batch * k * n);
                        let dst = &mut gb[i * k * n..(i + 1) * k * n];
                        if *b_transposed {
                            gemm(n, m, k, MatRef::transposed(gi, n), MatRef::rows(ai, k), 1.0, dst);
                        } else {
                            gemm(k, m, n, MatRef::transposed(ai, k), MatRef::rows(gi, n), 1.0, dst);
                        }
                    }
                }
            }
            Op::Unary { kind, x } => {
                let xv = nodes[*x].value.data();
                let yv = node.value.data();
                add_elementwise(&mut grads[*x], g.len(), |i| g[i] * kind.derivative(xv[i], yv[i]));
            }
            Op::Binary { kind, a, b, plan } => {
                let av = nodes[*a].value.data();
                let bv = nodes[*b].value.data();
                let (na, nb) = (av.len(), bv.len());
                if matches!(plan, Broadcast::Same) {
                    if needs(*a) {
                        match kind {
                            BinaryKind::Add | BinaryKind::Sub => add_elementwise(&mut grads[*a], na, |i| g[i]),
                            BinaryKind::Mul => add_elementwise(&mut grads[*a], na, |i| g[i] * bv[i]),
                            BinaryKind::Div => add_elementwise(&mut grads[*a], na, |i| g[i] / bv[i]),
                        }
                    }
                    if needs(*b) {
                        match kind {
                            BinaryKind::Add => add_elementwise(&mut grads[*b], nb, |i| g[i]),
                            BinaryKind::Sub => add_elementwise(&mut grads[*b], nb, |i| -g[i]),
                            BinaryKind::Mul => add_elementwise(&mut grads[*b], nb, |i| g[i] * av[i]),
                            BinaryKind::Div => add_elementwise(&mut grads[*b], nb, |i| -g[i] * av[i] / (bv[i] * bv[i])),
                        }
                    }
                    return;
                }
                if needs(*a) {
                    let ga = accumulate(&mut grads[*a], na);
                    match kind {
                        BinaryKind::Add | BinaryKind::Sub => plan.for_each(g.len(), na, nb, |i, ia, _| ga[ia] += g[i]),
                        BinaryKind::Mul => plan.for_each(g.len(), na, nb, |i, ia, ib| ga[ia] += g[i] * bv[ib]),
                        BinaryKind::Div => plan.for_each(g.len(), na, nb, |i, ia, ib| ga[ia] += g[i] / bv[ib]),
                    }
                }
                if needs(*b) {
                    let gb = accumulate(&mut grads[*b], nb);
                    match kind {
                        BinaryKind::Add => plan.for_each(g.len(), na, nb, |i, _, ib| gb[ib] += g[i]),
                        BinaryKind::Sub => plan.for_each(g.len(), na, nb, |i, _, ib| gb[ib] -= g[i]),
                        BinaryKind::Mul => plan.for_each(g.len(), na, nb, |i, ia, ib| gb[ib] += g[i] * av[ia]),
                        BinaryKind::Div => {
                            plan.for_each(g.len(), na, nb, |i, ia, ib| gb[ib] -= g[i] * av[ia] / (bv[ib] * bv[ib]))
                        }
                    }
                }
            }
            Op::Affine { x, scale } => {
                add_elementwise(&mut grads[*x], g.len(), |i| scale * g[i]);
            }
            Op::Softmax { x, outer, n, inner } => {
                let y = node.value.data();
                let gx = accumulate(&mut grads[*x], y.len());
                for o in 0..*outer {
                    for i in 0..*inner {
                        let base = o * n * inner + i;
                        let mut dot = 0.0;
                        for j in 0..*n {
                            dot += g[base + j * inner] * y[base + j * inner];
                        }
                        for j in 0..*n {
                            let p = base + j * inner;
                            gx[p] += y[p] * (g[p] - dot);
                        }
                    }
                }
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                d,
                xhat,
                inv_std,
            } => {
                let d = *d;
                let rows = inv_std.len();
                let gain_v = nodes[*gain].value.data();
                if needs(*gain) {
                    let gg = accumulate(&mut grads[*gain], d);
                    for r in 0..rows {
                        for j in 0..d {
                            gg[j] += g[r * d + j] * xhat[r * d + j];
                        }
                    }
                }
                if needs(*bias) {
                    let gb = accumulate(&mut grads[*bias], d);
                    for r in 0..rows {
                        for j in 0..d {
                            gb[j] += g[r * d + j];
                        }
                    }
                }
                if needs(*x) {
                    let gx = accumulate(&mut grads[*x], rows * d);
                    let df = d as f64;
                    for r in 0..rows {
                        let mut s1 = 0.0;
                        let mut s2 = 0.0;
                        for j in 0..d {
                            let gh = g[r * d + j] * gain_v[j];
                            s1 += gh;
                            s2 += gh * xhat[r * d + j];
                        }
                        for j in 0..d {
                            let gh = g[r * d + j] * gain_v[j];
                            gx[r * d + j] += inv_std[r] / df * (df * gh - s1 - xhat[r * d + j] * s2);
                        }
                    }
                }
            }
            Op::Sum { x } => {
                let len = nodes[*x].value.len();
                let gx = accumulate(&mut grads[*x], len);
                for v in gx.iter_mut() {
                    *v += g[0];
                }
            }
            Op::SumAxis { x, outer, n, inner } => {
                let gx = accumulate(&mut grads[*x], outer * n * inner);
                for o in 0..*outer {
                    for j in 0..*n {
                        let dst = &mut gx[(o * n + j) * inner..(o * n + j + 1) * inner];
                        for (d, s) in dst.iter_mut().zip(&g[o * inner..(o + 1) * inner]) {
                            *d += s;
                        }
                    }
                }
            }
            Op::Reshape { x } => {
                add_elementwise(&mut grads[*x], g.len(), |i| g[i]);
            }
            Op::Concat {
                parts,
                outer,
                total,
                inner,
            } => {
                let mut offset = 0;
                for &(p, n) in parts {
                    if needs(p) {
                        let gp = accumulate(&mut grads[p], outer * n * inner);
                        for o in 0..*outer {
                            let src = &g[(o * total + offset) * inner..(o * total + offset + n) * inner];
                            for (d, s) in gp[o * n * inner..(o + 1) * n * inner].iter_mut().zip(src) {
                                *d += s;
                            }
                        }
                    }
                    offset += n;
                }
            }
            Op::Narrow {
                x,
                outer,
                n,
                start,
                len,
                inner,
            } => {
                let gx = accumulate(&mut grads[*x], outer * n * inner);
                for o in 0..*outer {
                    let base = (o * n + start) * inner;
                    let src = &g[o * len * inner..(o + 1) * len * inner];
                    for (d, s) in gx[base..base + len * inner].iter_mut().zip(src) {
                        *d += s;
                    }
                }
            }
            Op::BSpline { x, grid } => {
                let xv = nodes[*x].value.data();
                let nb = grid.num_basis();
                let gx = accumulate(&mut grads[*x], xv.len());
                let mut deriv = vec![0.0; nb];
                for (i, &v) in xv.iter().enumerate() {
                    grid.basis_derivative_into(v, &mut deriv);
                    gx[i] += g[i * nb..(i + 1) * nb]
                        .iter()
                        .zip(&deriv)
                        .map(|(a, b)| a * b)
                        .sum::<f64>();
                }
            }
            Op::Permute { x, perm } => {
                let mut inverse = vec![0; perm.len()];
                for (i, &p) in perm.iter().enumerate() {
                    inverse[p] = i;
                }
                let (_, back) = permute_data(node.value.shape(), g, &inverse);
                let gx = accumulate(&mut grads[*x], back.len());
                for (d, s) in gx.iter_mut().zip(&back) {
                    *d += s;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn matmul_examples() {
        let g = Graph::new();
        let i2 = g.constant(Tensor::eye(2));
        let m = g.constant(t(&[2, 2], &[1., 2., 3., 4.]));
        assert_eq!(g.value(g.matmul(i2, m).unwrap()).data(), &[1., 2., 3., 4.]);
        let a = g.constant(t(&[1, 2], &[1., 2.]));
        let b = g.constant(t(&[2, 1], &[3., 4.]));
        assert_eq!(g.value(g.matmul(a, b).unwrap()).data(), &[11.]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let g = Graph::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[2, 3]));
        let err = g.matmul(a, b).unwrap_err();
        let msg = alloc::format!("{err}");
        assert!(msg.contains("[2, 3]"), "{msg}");
        assert!(matches!(err, Error::Shape { .. }));
    }

    #[test]
    fn matmul_backward_sum() {
        // loss = sum(A B) with B = I gives dA = ones
        let g = Graph::new();
        let a = g.param(t(&[2, 2], &[1., 2., 3., 4.]));
        let b = g.constant(Tensor::eye(2));
        let s = g.sum(g.matmul(a, b).unwrap()).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.wrt(a).data(), &[1., 1., 1., 1.]);
    }

    #[test]
    fn activation_examples() {
        let g = Graph::new();
        let x = g.constant(t(&[3], &[0.0, 3.0, 0.0]));
        assert_eq!(g.value(g.sigmoid(x).unwrap()).data()[0], 0.5);
        assert_eq!(g.value(g.elu(x).unwrap()).data()[1], 3.0);
        assert_eq!(g.value(g.tanh(x).unwrap()).data()[0], 0.0);
    }

    #[test]
    fn elementwise_dispatch_errors() {
        let g = Graph::new();
        let x = g.constant(Tensor::zeros(&[2]));
        assert!("frobnicate".parse::<ElementwiseKind>().is_err());
        let add: ElementwiseKind = "add".parse().unwrap();
        assert!(g.elementwise(add, x, None).is_err());
        let y = g.constant(Tensor::zeros(&[3]));
        assert!(matches!(g.elementwise(add, x, Some(y)), Err(Error::Shape { .. })));
        let relu: ElementwiseKind = "relu".parse().unwrap();
        assert!(g.elementwise(relu, x, None).is_ok());
    }

    #[test]
    fn softmax_examples() {
        let g = Graph::new();
        let x = g.constant(t(&[2], &[0.0, 0.0]));
        assert_eq!(g.value(g.softmax(x, 0).unwrap()).data(), &[0.5, 0.5]);
        let x = g.constant(t(&[2], &[0.0, libm::log(3.0)]));
        let y = g.value(g.softmax(x, 0).unwrap());
        assert!((y.data()[0] - 0.25).abs() < 1e-15 && (y.data()[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn softmax_over_middle_axis() {
        let g = Graph::new();
        let x = g.constant(t(&[1, 2, 2], &[0.0, 1.0, 0.0, 2.0]));
        let y = g.value(g.softmax(x, 1).unwrap());
        assert!((y.data()[0] + y.data()[2] - 1.0).abs() < 1e-15);
        assert!((y.data()[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn layer_norm_examples() {
        let g = Graph::new();
        let ones = g.constant(Tensor::full(&[4], 1.0));
        let zeros = g.constant(Tensor::zeros(&[4]));
        let y = g.value(g.layer_norm(ones, ones, zeros).unwrap());
        assert_eq!(y.data(), &[0.0; 4]);

        let x = g.constant(t(&[2], &[-1.0, 1.0]));
        let one2 = g.constant(Tensor::full(&[2], 1.0));
        let zero2 = g.constant(Tensor::zeros(&[2]));
        let y = g.value(g.layer_norm(x, one2, zero2).unwrap());
        let s = 1.0 / libm::sqrt(1.0 + 1e-6);
        assert!((y.data()[0] + s).abs() < 1e-15 && (y.data()[1] - s).abs() < 1e-15);

        let x = g.constant(t(&[2], &[0.0, 2.0]));
        let gain = g.constant(Tensor::full(&[2], 2.0));
        let bias = g.constant(Tensor::full(&[2], 1.0));
        let y = g.value(g.layer_norm(x, gain, bias).unwrap());
        assert!((y.data()[0] + 1.0).abs() < 1e-5 && (y.data()[1] - 3.0).abs() < 1e-5);

        let x1 = g.constant(Tensor::zeros(&[3, 1]));
        let g1 = g.constant(Tensor::zeros(&[1]));
        assert!(g.layer_norm(x1, g1, g1).is_err());
    }

    #[test]
    fn backward_examples() {
        let g = Graph::new();
        let x = g.param(t(&[3], &[0.3, -1.0, 2.0]));
        let s = g.sum(x).unwrap();
        assert_eq!(g.backward(s).unwrap().wrt(x).data(), &[1., 1., 1.]);

        let g = Graph::new();
        let x = g.param(t(&[2], &[1.0, 2.0]));
        let s = g.sum(g.mul(x, x).unwrap()).unwrap();
        assert_eq!(g.backward(s).unwrap().wrt(x).data(), &[2., 4.]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let g = Graph::new();
        let x = g.param(Tensor::zeros(&[2]));
        assert!(g.backward(x).is_err());
    }

    #[test]
    fn non_finite_outputs_are_errors() {
        let g = Graph::new();
        let x = g.constant(t(&[1], &[1000.0]));
        assert!(matches!(g.exp(x), Err(Error::NonFinite { op: "exp" })));
        let z = g.constant(Tensor::zeros(&[1]));
        assert!(g.div(x, z).is_err());
    }

    #[test]
    fn diamond_graph_matches_expanded_form() {
        // y = s * s with s = a + b, versus a^2 + 2ab + b^2
        let a0 = t(&[2], &[0.7, -0.2]);
        let b0 = t(&[2], &[1.5, 0.4]);
        let g = Graph::new();
        let (a, b) = (g.param(a0.clone()), g.param(b0.clone()));
        let s = g.add(a, b).unwrap();
        let y = g.sum(g.mul(s, s).unwrap()).unwrap();
        let gr = g.backward(y).unwrap();

        let h = Graph::new();
        let (a2, b2) = (h.param(a0), h.param(b0));
        let aa = h.mul(a2, a2).unwrap();
        let ab = h.scale(h.mul(a2, b2).unwrap(), 2.0).unwrap();
        let bb = h.mul(b2, b2).unwrap();
        let y2 = h.sum(h.add(h.add(aa, ab).unwrap(), bb).unwrap()).unwrap();
        let gr2 = h.backward(y2).unwrap();
        assert!(gr.wrt(a).max_abs_diff(&gr2.wrt(a2)) < 1e-14);
        assert!(gr.wrt(b).max_abs_diff(&gr2.wrt(b2)) < 1e-14);
    }

    #[test]
    fn concat_and_narrow_roundtrip() {
        let g = Graph::new();
        let a = g.constant(t(&[2, 1], &[1., 2.]));
        let b = g.constant(t(&[2, 2], &[3., 4., 5., 6.]));
        let c = g.concat(&[a, b], 1).unwrap();
        assert_eq!(g.value(c).data(), &[1., 3., 4., 2., 5., 6.]);
        let n = g.narrow(c, 1, 1, 2).unwrap();
        assert_eq!(g.value(n).data(), &[3., 4., 5., 6.]);
    }

    #[test]
    fn permute_reorders_axes() {
        let g = Graph::new();
        let x = g.param(t(&[2, 3], &[1., 2., 3., 4., 5., 6.]));
        let y = g.permute(x, &[1, 0]).unwrap();
        assert_eq!(g.value(y).shape(), &[3, 2]);
        assert_eq!(g.value(y).data(), &[1., 4., 2., 5., 3., 6.]);
        let z = g.constant(t(&[2, 3, 4], &(0..24).map(f64::from).collect::<Vec<_>>()));
        let p = g.value(g.permute(z, &[2, 0, 1]).unwrap());
        assert_eq!(p.shape(), &[4, 2, 3]);
        for a in 0..2 {
            for b in 0..3 {
                for c in 0..4 {
                    assert_eq!(p.at(&[c, a, b]), (a * 12 + b * 4 + c) as f64);
                }
            }
        }
        assert!(g.permute(z, &[0, 0, 1]).is_err());
        assert!(g.permute(z, &[0, 1]).is_err());
    }

    #[test]
    fn permute_gradient() {
        let w = t(
            &[3, 4, 2],
            &(0..24).map(|i| (i as f64 * 0.37).sin()).collect::<Vec<_>>(),
        );
        let x = t(
            &[2, 3, 4],
            &(0..24).map(|i| (i as f64 * 0.11).cos()).collect::<Vec<_>>(),
        );
        let err = crate::gradcheck::finite_diff_check(
            |g, v| {
                let p = g.permute(v, &[1, 2, 0])?;
                let sq = g.square(p)?;
                g.sum(g.mul(sq, g.constant(w.clone()))?)
            },
            &x,
            1e-6,
        )
        .unwrap();
        assert!(err < 1e-7, "{err}");
    }

    #[test]
    fn unused_params_get_zero_gradients() {
        let g = Graph::new();
        let x = g.param(Tensor::full(&[2], 1.0));
        let unused = g.param(Tensor::full(&[3], 1.0));
        let s = g.sum(x).unwrap();
        let gr = g.backward(s).unwrap();
        assert_eq!(gr.wrt(unused).data(), &[0.0; 3]);
    }
}
