//! Append-only differentiation graph.
//!
//! Nodes are stored in insertion order, which is also a topological order;
//! [`Graph::backward`] walks them in strictly decreasing index. A node only
//! participates in backward if one of its inputs requires a gradient.

use crate::error::{Result, TensorError};
use crate::fft::{Fft, RfftScratch};
use crate::kernels::{self, Conv1dGeom, Conv2dGeom, ConvT1dGeom};
use crate::real::Real;
use crate::tensor::{numel, Tensor};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UnaryOp {
    Neg,
    Abs,
    Tanh,
    Sin,
    LeakyRelu(f64),
    Relu,
    Log,
    Square,
    Sqrt,
    Exp,
    /// Multiply by a constant.
    Scale(f64),
    /// Add a constant.
    AddScalar(f64),
    /// `max(x, floor)`; gradient is zero where the floor is active.
    ClampMin(f64),
}

impl UnaryOp {
    fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "neg",
            UnaryOp::Abs => "abs",
            UnaryOp::Tanh => "tanh",
            UnaryOp::Sin => "sin",
            UnaryOp::LeakyRelu(_) => "leaky_relu",
            UnaryOp::Relu => "relu",
            UnaryOp::Log => "log",
            UnaryOp::Square => "square",
            UnaryOp::Sqrt => "sqrt",
            UnaryOp::Exp => "exp",
            UnaryOp::Scale(_) => "scale",
            UnaryOp::AddScalar(_) => "add_scalar",
            UnaryOp::ClampMin(_) => "clamp_min",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceOp {
    Sum,
    Mean,
    L1Norm,
    FrobeniusNorm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PadMode {
    Zero,
    Reflect,
}

/// Geometry of a 1-D convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv1dOptions {
    pub stride: usize,
    pub dilation: usize,
    pub padding: usize,
    pub groups: usize,
}

impl Default for Conv1dOptions {
    fn default() -> Self {
        Conv1dOptions {
            stride: 1,
            dilation: 1,
            padding: 0,
            groups: 1,
        }
    }
}

impl Conv1dOptions {
    pub fn stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }
    pub fn dilation(mut self, dilation: usize) -> Self {
        self.dilation = dilation;
        self
    }
    pub fn padding(mut self, padding: usize) -> Self {
        self.padding = padding;
        self
    }
    pub fn groups(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Unary(UnaryOp, Var),
    Binary(BinaryOp, Var, Var),
    Reduce {
        op: ReduceOp,
        input: Var,
        axes: Vec<usize>,
    },
    Conv1d {
        x: Var,
        w: Var,
        bias: Option<Var>,
        geom: Conv1dGeom,
    },
    ConvTranspose1d {
        x: Var,
        w: Var,
        bias: Option<Var>,
        geom: ConvT1dGeom,
    },
    Conv2d {
        x: Var,
        w: Var,
        bias: Option<Var>,
        geom: Conv2dGeom,
    },
    RepeatInterleave {
        input: Var,
        factor: usize,
    },
    AvgPool1d {
        input: Var,
        kernel: usize,
        stride: usize,
    },
    Pad1d {
        input: Var,
        left: usize,
        right: usize,
        mode: PadMode,
    },
    Reshape(Var),
    Slice {
        input: Var,
        axis: usize,
        start: usize,
    },
    Concat {
        inputs: Vec<Var>,
        axis: usize,
    },
    Permute {
        input: Var,
        perm: Vec<usize>,
    },
    Frame {
        input: Var,
        length: usize,
        hop: usize,
    },
    Rfft {
        input: Var,
        n_fft: usize,
    },
    ComplexAbs {
        input: Var,
        floor: f64,
    },
}

#[derive(Debug, Clone)]
struct Node<T> {
    op: Op,
    shape: Vec<usize>,
    value: Vec<T>,
    requires_grad: bool,
    /// Accumulated gradient; only leaves keep one.
    grad: Option<Vec<T>>,
}

/// Tape of tensor operations supporting reverse-mode differentiation.
#[derive(Debug, Clone, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

fn row_major_strides(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    strides
}

/// For each flat input index, the flat index of its reduction target.
fn reduce_index_map(shape: &[usize], axes: &[usize]) -> (Vec<usize>, Vec<usize>, usize) {
    let out_shape: Vec<usize> = shape
        .iter()
        .enumerate()
        .filter(|(i, _)| !axes.contains(i))
        .map(|(_, &d)| d)
        .collect();
    let count: usize = axes.iter().map(|&a| shape[a]).product();
    let out_strides = row_major_strides(&out_shape);
    // stride in the output for each input axis (0 for reduced axes)
    let mut axis_out_stride = Vec::with_capacity(shape.len());
    let mut j = 0;
    for i in 0..shape.len() {
        if axes.contains(&i) {
            axis_out_stride.push(0);
        } else {
            axis_out_stride.push(out_strides[j]);
            j += 1;
        }
    }
    let n = numel(shape);
    let mut map = Vec::with_capacity(n);
    let mut idx = vec![0usize; shape.len()];
    let mut cur = 0usize;
    for _ in 0..n {
        map.push(cur);
        // increment multi-index, last axis fastest
        for ax in (0..shape.len()).rev() {
            idx[ax] += 1;
            cur += axis_out_stride[ax];
            if idx[ax] < shape[ax] {
                break;
            }
            cur -= axis_out_stride[ax] * shape[ax];
            idx[ax] = 0;
        }
    }
    (map, out_shape, count)
}

fn permute_source_index(shape: &[usize], perm: &[usize]) -> Vec<usize> {
    let in_strides = row_major_strides(shape);
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let n = numel(shape);
    let mut src = Vec::with_capacity(n);
    let mut idx = vec![0usize; out_shape.len()];
    for _ in 0..n {
        src.push(idx.iter().zip(perm).map(|(&i, &p)| i * in_strides[p]).sum());
        for ax in (0..out_shape.len()).rev() {
            idx[ax] += 1;
            if idx[ax] < out_shape[ax] {
                break;
            }
            idx[ax] = 0;
        }
    }
    src
}

#[inline]
fn reflect_index(p: isize, len: usize) -> usize {
    let n = len as isize;
    let mut s = p;
    if s < 0 {
        s = -s;
    }
    if s >= n {
        s = 2 * (n - 1) - s;
    }
    s as usize
}

fn broadcast_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let (na, nb) = (numel(a), numel(b));
    if a == b {
        Ok(a.to_vec())
    } else if nb == 1 {
        Ok(a.to_vec())
    } else if na == 1 {
        Ok(b.to_vec())
    } else if a.len() >= b.len() && a.ends_with(b) {
        Ok(a.to_vec())
    } else if b.len() > a.len() && b.ends_with(a) {
        Ok(b.to_vec())
    } else {
        Err(TensorError::ShapeMismatch {
            op,
            lhs: a.to_vec(),
            rhs: b.to_vec(),
        })
    }
}

fn last_axis(op: &'static str, shape: &[usize]) -> Result<usize> {
    shape
        .last()
        .copied()
        .ok_or_else(|| TensorError::invalid(op, "needs at least one axis"))
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn node(&self, v: Var) -> &Node<T> {
        &self.nodes[v.0]
    }

    fn push(&mut self, op: Op, inputs: &[Var], shape: Vec<usize>, value: Vec<T>) -> Var {
        debug_assert_eq!(numel(&shape), value.len());
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            op,
            shape,
            value,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// Adds a tensor as a leaf. It is a differentiation target iff the tensor
    /// has `requires_grad` set.
    pub fn leaf(&mut self, t: &Tensor<T>) -> Var {
        self.nodes.push(Node {
            op: Op::Leaf,
            shape: t.shape().to_vec(),
            value: t.data().to_vec(),
            requires_grad: t.requires_grad(),
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, shape: impl Into<Vec<usize>>, data: Vec<T>) -> Result<Var> {
        let t = Tensor::new(shape, data)?;
        Ok(self.leaf(&t))
    }

    pub fn scalar(&mut self, value: T) -> Var {
        self.leaf(&Tensor::scalar(value))
    }

    /// Copy of `v` that stops gradient flow.
    pub fn detach(&mut self, v: Var) -> Var {
        let n = self.node(v);
        let (shape, value) = (n.shape.clone(), n.value.clone());
        self.nodes.push(Node {
            op: Op::Leaf,
            shape,
            value,
            requires_grad: false,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.node(v).value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.node(v).shape
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.node(v).requires_grad
    }

    pub fn tensor(&self, v: Var) -> Tensor<T> {
        let n = self.node(v);
        Tensor::new(n.shape.clone(), n.value.clone()).expect("node shape is consistent")
    }

    pub fn item(&self, v: Var) -> Result<T> {
        let n = self.node(v);
        if n.value.len() != 1 {
            return Err(TensorError::invalid(
                "item",
                format!("shape {:?} is not a scalar", n.shape),
            ));
        }
        Ok(n.value[0])
    }

    /// Accumulated gradient of a leaf, if backward reached it.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.node(v).grad.as_deref()
    }

    pub fn zero_grads(&mut self) {
        for n in &mut self.nodes {
            if let Some(g) = &mut n.grad {
                g.fill(T::zero());
            }
        }
    }

    // ---------------------------------------------------------------- elementwise

    pub fn unary(&mut self, op: UnaryOp, a: Var) -> Result<Var> {
        let x = &self.node(a).value;
        let mut out = Vec::with_capacity(x.len());
        match op {
            UnaryOp::Log | UnaryOp::Sqrt => {
                for (i, &v) in x.iter().enumerate() {
                    let bad = if op == UnaryOp::Log {
                        v <= T::zero() || v.is_nan()
                    } else {
                        v < T::zero() || v.is_nan()
                    };
                    if bad {
                        return Err(TensorError::Domain {
                            op: op.name(),
                            index: i,
                            value: v.as_f64(),
                        });
                    }
                    out.push(if op == UnaryOp::Log { v.ln() } else { v.sqrt() });
                }
            }
            _ => {
                let f = unary_forward::<T>(op);
                out.extend(x.iter().map(|&v| f(v)));
            }
        }
        let shape = self.node(a).shape.clone();
        Ok(self.push(Op::Unary(op, a), &[a], shape, out))
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.unary(UnaryOp::Neg, a)
    }
    pub fn abs(&mut self, a: Var) -> Result<Var> {
        self.unary(UnaryOp::Abs, a)
    }
    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary(UnaryOp::Tanh, a)
    }
    pub fn sin(&mut self, a: Var) -> Result<Var> {
        self.unary(UnaryOp::Sin, a)
    }
    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Result<Var> {
        self.unary(UnaryOp::LeakyRelu(slope), a)
    }
    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary(UnaryOp::Relu, a)
    }
    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.unary(UnaryOp::Log, a)
    }
    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.unary(UnaryOp::Square, a)
    }
    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        self.unary(UnaryOp::Sqrt, a)
    }
    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.unary(UnaryOp::Exp, a)
    }
    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.unary(UnaryOp::Scale(c), a)
    }
    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        self.unary(UnaryOp::AddScalar(c), a)
    }
    pub fn clamp_min(&mut self, a: Var, floor: f64) -> Result<Var> {
        self.unary(UnaryOp::ClampMin(floor), a)
    }

    /// Elementwise binary op. Operands must have equal shapes, or one must be
    /// a single element, or one shape must be a trailing suffix of the other.
    pub fn binary(&mut self, op: BinaryOp, a: Var, b: Var) -> Result<Var> {
        let name = match op {
            BinaryOp::Add => "add",
            BinaryOp::Sub => "sub",
            BinaryOp::Mul => "mul",
            BinaryOp::Div => "div",
        };
        let shape = broadcast_shape(name, &self.node(a).shape, &self.node(b).shape)?;
        let (x, y) = (&self.node(a).value, &self.node(b).value);
        let n = numel(&shape);
        let (lx, ly) = (x.len(), y.len());
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let (u, v) = (x[i % lx], y[i % ly]);
            out.push(match op {
                BinaryOp::Add => u + v,
                BinaryOp::Sub => u - v,
                BinaryOp::Mul => u * v,
                BinaryOp::Div => u / v,
            });
        }
        Ok(self.push(Op::Binary(op, a, b), &[a, b], shape, out))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Add, a, b)
    }
    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Sub, a, b)
    }
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Mul, a, b)
    }
    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Div, a, b)
    }

    // ---------------------------------------------------------------- reductions

    /// Reduces over `axes`, or over every axis when `None`. Reduced axes are
    /// removed from the output shape.
    pub fn reduce(&mut self, op: ReduceOp, a: Var, axes: Option<&[usize]>) -> Result<Var> {
        let shape = self.node(a).shape.clone();
        let rank = shape.len();
        let mut axes: Vec<usize> = match axes {
            Some(ax) => ax.to_vec(),
            None => (0..rank).collect(),
        };
        axes.sort_unstable();
        axes.dedup();
        if let Some(&bad) = axes.iter().find(|&&ax| ax >= rank) {
            return Err(TensorError::InvalidAxis {
                op: "reduce",
                axis: bad,
                rank,
            });
        }
        let (map, out_shape, count) = reduce_index_map(&shape, &axes);
        let x = &self.node(a).value;
        let mut out = vec![T::zero(); numel(&out_shape)];
        match op {
            ReduceOp::Sum | ReduceOp::Mean => {
                for (&m, &v) in map.iter().zip(x) {
                    out[m] += v;
                }
                if op == ReduceOp::Mean {
                    let c = T::from_f64(count as f64);
                    out.iter_mut().for_each(|o| *o /= c);
                }
            }
            ReduceOp::L1Norm => {
                for (&m, &v) in map.iter().zip(x) {
                    out[m] += v.abs();
                }
            }
            ReduceOp::FrobeniusNorm => {
                for (&m, &v) in map.iter().zip(x) {
                    out[m] += v * v;
                }
                out.iter_mut().for_each(|o| *o = o.sqrt());
            }
        }
        Ok(self.push(Op::Reduce { op, input: a, axes }, &[a], out_shape, out))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.reduce(ReduceOp::Sum, a, None)
    }
    pub fn mean(&mut self, a: Var) -> Result<Var> {
        self.reduce(ReduceOp::Mean, a, None)
    }
    pub fn l1_norm(&mut self, a: Var) -> Result<Var> {
        self.reduce(ReduceOp::L1Norm, a, None)
    }
    pub fn frobenius_norm(&mut self, a: Var) -> Result<Var> {
        self.reduce(ReduceOp::FrobeniusNorm, a, None)
    }
    pub fn mean_axes(&mut self, a: Var, axes: &[usize]) -> Result<Var> {
        self.reduce(ReduceOp::Mean, a, Some(axes))
    }
    pub fn sum_axes(&mut self, a: Var, axes: &[usize]) -> Result<Var> {
        self.reduce(ReduceOp::Sum, a, Some(axes))
    }

    // ---------------------------------------------------------------- convolutions

    /// Cross-correlation of `x[B, Cin, T]` with `w[Cout, Cin/groups, K]`.
    pub fn conv1d(&mut self, x: Var, w: Var, bias: Option<Var>, opts: Conv1dOptions) -> Result<Var> {
        let (xs, ws) = (self.node(x).shape.clone(), self.node(w).shape.clone());
        if xs.len() != 3 || ws.len() != 3 {
            return Err(TensorError::invalid(
                "conv1d",
                format!("expected x [B,C,T] and w [Cout,Cin,K], got {xs:?} and {ws:?}"),
            ));
        }
        let Conv1dOptions {
            stride,
            dilation,
            padding,
            groups,
        } = opts;
        if stride == 0 || dilation == 0 || groups == 0 || ws[2] == 0 {
            return Err(TensorError::invalid("conv1d", "stride, dilation, groups and K must be >= 1"));
        }
        let (cout, cin_g, k) = (ws[0], ws[1], ws[2]);
        if xs[1] % groups != 0 || cout % groups != 0 || xs[1] / groups != cin_g {
            return Err(TensorError::ShapeMismatch {
                op: "conv1d",
                lhs: xs,
                rhs: ws,
            });
        }
        let span = dilation * (k - 1) + 1;
        let padded = xs[2] + 2 * padding;
        if padded < span {
            return Err(TensorError::invalid(
                "conv1d",
                format!("input length {} (padded {padded}) shorter than kernel span {span}", xs[2]),
            ));
        }
        let len_out = (padded - span) / stride + 1;
        self.check_bias("conv1d", bias, cout)?;
        let geom = Conv1dGeom {
            batch: xs[0],
            cin: xs[1],
            cout,
            len_in: xs[2],
            len_out,
            kernel: k,
            stride,
            dilation,
            padding,
            groups,
        };
        let mut out = vec![T::zero(); xs[0] * cout * len_out];
        kernels::conv1d_forward(
            &self.node(x).value,
            &self.node(w).value,
            bias.map(|b| self.node(b).value.as_slice()),
            &geom,
            &mut out,
        );
        let inputs: Vec<Var> = [Some(x), Some(w), bias].into_iter().flatten().collect();
        Ok(self.push(Op::Conv1d { x, w, bias, geom }, &inputs, vec![xs[0], cout, len_out], out))
    }

    /// Transposed convolution (adjoint of strided `conv1d`) of `x[B, Cin, T]`
    /// with `w[Cin, Cout, K]`; output length `(T - 1) * stride + K`.
    pub fn conv_transpose1d(&mut self, x: Var, w: Var, bias: Option<Var>, stride: usize) -> Result<Var> {
        let (xs, ws) = (self.node(x).shape.clone(), self.node(w).shape.clone());
        if xs.len() != 3 || ws.len() != 3 || xs[1] != ws[0] {
            return Err(TensorError::ShapeMismatch {
                op: "conv_transpose1d",
                lhs: xs,
                rhs: ws,
            });
        }
        if stride == 0 || ws[2] < stride {
            return Err(TensorError::invalid("conv_transpose1d", "requires K >= stride >= 1"));
        }
        if xs[2] == 0 {
            return Err(TensorError::invalid("conv_transpose1d", "empty input"));
        }
        let (cout, k) = (ws[1], ws[2]);
        self.check_bias("conv_transpose1d", bias, cout)?;
        let len_out = (xs[2] - 1) * stride + k;
        let geom = ConvT1dGeom {
            batch: xs[0],
            cin: xs[1],
            cout,
            len_in: xs[2],
            len_out,
            kernel: k,
            stride,
        };
        let mut out = vec![T::zero(); xs[0] * cout * len_out];
        kernels::conv_transpose1d_forward(
            &self.node(x).value,
            &self.node(w).value,
            bias.map(|b| self.node(b).value.as_slice()),
            &geom,
            &mut out,
        );
        let inputs: Vec<Var> = [Some(x), Some(w), bias].into_iter().flatten().collect();
        Ok(self.push(
            Op::ConvTranspose1d { x, w, bias, geom },
            &inputs,
            vec![xs[0], cout, len_out],
            out,
        ))
    }

    /// Cross-correlation of `x[B, Cin, H, W]` with `w[Cout, Cin, KH, KW]`,
    /// zero padding on both spatial axes.
    pub fn conv2d(&mut self, x: Var, w: Var, bias: Option<Var>, stride: usize, padding: usize) -> Result<Var> {
        let (xs, ws) = (self.node(x).shape.clone(), self.node(w).shape.clone());
        if xs.len() != 4 || ws.len() != 4 || xs[1] != ws[1] {
            return Err(TensorError::ShapeMismatch {
                op: "conv2d",
                lhs: xs,
                rhs: ws,
            });
        }
        if stride == 0 || ws[2] == 0 || ws[3] == 0 {
            return Err(TensorError::invalid("conv2d", "stride and kernel must be >= 1"));
        }
        let (hp, wp) = (xs[2] + 2 * padding, xs[3] + 2 * padding);
        if hp < ws[2] || wp < ws[3] {
            return Err(TensorError::invalid(
                "conv2d",
                format!("input {:?} smaller than kernel {:?}", &xs[2..], &ws[2..]),
            ));
        }
        self.check_bias("conv2d", bias, ws[0])?;
        let geom = Conv2dGeom {
            batch: xs[0],
            cin: xs[1],
            cout: ws[0],
            h_in: xs[2],
            w_in: xs[3],
            h_out: (hp - ws[2]) / stride + 1,
            w_out: (wp - ws[3]) / stride + 1,
            kh: ws[2],
            kw: ws[3],
            stride,
            padding,
        };
        let mut out = vec![T::zero(); geom.batch * geom.cout * geom.h_out * geom.w_out];
        kernels::conv2d_forward(
            &self.node(x).value,
            &self.node(w).value,
            bias.map(|b| self.node(b).value.as_slice()),
            &geom,
            &mut out,
        );
        let inputs: Vec<Var> = [Some(x), Some(w), bias].into_iter().flatten().collect();
        let shape = vec![geom.batch, geom.cout, geom.h_out, geom.w_out];
        Ok(self.push(Op::Conv2d { x, w, bias, geom }, &inputs, shape, out))
    }

    fn check_bias(&self, op: &'static str, bias: Option<Var>, cout: usize) -> Result<()> {
        if let Some(b) = bias {
            if self.node(b).shape != [cout] {
                return Err(TensorError::ShapeMismatch {
                    op,
                    lhs: self.node(b).shape.clone(),
                    rhs: vec![cout],
                });
            }
        }
        Ok(())
    }

    // ---------------------------------------------------------------- structural

    /// Repeats each element of the last axis `factor` times.
    pub fn repeat_interleave(&mut self, a: Var, factor: usize) -> Result<Var> {
        if factor == 0 {
            return Err(TensorError::invalid("repeat_interleave", "factor must be >= 1"));
        }
        let mut shape = self.node(a).shape.clone();
        let last = last_axis("repeat_interleave", &shape)?;
        *shape.last_mut().expect("rank >= 1") = last * factor;
        let x = &self.node(a).value;
        let mut out = Vec::with_capacity(x.len() * factor);
        for &v in x {
            out.extend(std::iter::repeat(v).take(factor));
        }
        Ok(self.push(Op::RepeatInterleave { input: a, factor }, &[a], shape, out))
    }

    /// Window average over the last axis, no padding.
    pub fn avg_pool1d(&mut self, a: Var, kernel: usize, stride: usize) -> Result<Var> {
        let mut shape = self.node(a).shape.clone();
        let len = last_axis("avg_pool1d", &shape)?;
        if kernel == 0 || stride == 0 || len < kernel {
            return Err(TensorError::invalid(
                "avg_pool1d",
                format!("length {len} with kernel {kernel}, stride {stride}"),
            ));
        }
        let len_out = (len - kernel) / stride + 1;
        *shape.last_mut().expect("rank >= 1") = len_out;
        let x = &self.node(a).value;
        let inv = T::from_f64(1.0 / kernel as f64);
        let mut out = Vec::with_capacity(x.len() / len * len_out);
        for row in x.chunks_exact(len) {
            for t in 0..len_out {
                let s: T = row[t * stride..t * stride + kernel].iter().copied().sum();
                out.push(s * inv);
            }
        }
        Ok(self.push(Op::AvgPool1d { input: a, kernel, stride }, &[a], shape, out))
    }

    /// Pads the last axis. Reflection excludes the edge sample and needs
    /// `left, right < len`.
    pub fn pad1d(&mut self, a: Var, left: usize, right: usize, mode: PadMode) -> Result<Var> {
        let mut shape = self.node(a).shape.clone();
        let len = last_axis("pad1d", &shape)?;
        if len == 0 {
            return Err(TensorError::invalid("pad1d", "empty signal"));
        }
        if mode == PadMode::Reflect && (left >= len || right >= len) {
            return Err(TensorError::invalid(
                "pad1d",
                format!("reflect padding ({left}, {right}) needs a signal longer than the pad, got {len}"),
            ));
        }
        let len_out = len + left + right;
        *shape.last_mut().expect("rank >= 1") = len_out;
        let x = &self.node(a).value;
        let mut out = Vec::with_capacity(x.len() / len * len_out);
        for row in x.chunks_exact(len) {
            for p in 0..len_out {
                let src = p as isize - left as isize;
                out.push(match mode {
                    PadMode::Zero if src < 0 || src >= len as isize => T::zero(),
                    PadMode::Zero => row[src as usize],
                    PadMode::Reflect => row[reflect_index(src, len)],
                });
            }
        }
        Ok(self.push(Op::Pad1d { input: a, left, right, mode }, &[a], shape, out))
    }

    pub fn reshape(&mut self, a: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let shape = shape.into();
        if numel(&shape) != self.node(a).value.len() {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                lhs: self.node(a).shape.clone(),
                rhs: shape,
            });
        }
        let value = self.node(a).value.clone();
        Ok(self.push(Op::Reshape(a), &[a], shape, value))
    }

    /// Elements `start..end` along `axis`.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, end: usize) -> Result<Var> {
        let mut shape = self.node(a).shape.clone();
        if axis >= shape.len() {
            return Err(TensorError::InvalidAxis {
                op: "slice",
                axis,
                rank: shape.len(),
            });
        }
        if start > end || end > shape[axis] {
            return Err(TensorError::invalid(
                "slice",
                format!("range {start}..{end} out of bounds for axis of length {}", shape[axis]),
            ));
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let dim = shape[axis];
        let x = &self.node(a).value;
        let mut out = Vec::with_capacity(outer * (end - start) * inner);
        for o in 0..outer {
            out.extend_from_slice(&x[(o * dim + start) * inner..(o * dim + end) * inner]);
        }
        shape[axis] = end - start;
        Ok(self.push(Op::Slice { input: a, axis, start }, &[a], shape, out))
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = inputs
            .first()
            .ok_or_else(|| TensorError::invalid("concat", "no inputs"))?;
        let base = self.node(*first).shape.clone();
        if axis >= base.len() {
            return Err(TensorError::InvalidAxis {
                op: "concat",
                axis,
                rank: base.len(),
            });
        }
        let mut total = 0;
        for &v in inputs {
            let s = &self.node(v).shape;
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(TensorError::ShapeMismatch {
                    op: "concat",
                    lhs: base,
                    rhs: s.clone(),
                });
            }
            total += s[axis];
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &v in inputs {
                let d = self.node(v).shape[axis];
                out.extend_from_slice(&self.node(v).value[o * d * inner..(o + 1) * d * inner]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        Ok(self.push(
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            inputs,
            shape,
            out,
        ))
    }

    /// Reorders axes; output axis `i` is input axis `perm[i]`.
    pub fn permute(&mut self, a: Var, perm: &[usize]) -> Result<Var> {
        let shape = self.node(a).shape.clone();
        let mut seen = vec![false; shape.len()];
        let valid = perm.len() == shape.len()
            && perm.iter().all(|&p| p < shape.len() && !std::mem::replace(&mut seen[p], true));
        if !valid {
            return Err(TensorError::invalid(
                "permute",
                format!("{perm:?} is not a permutation of rank {}", shape.len()),
            ));
        }
        let src = permute_source_index(&shape, perm);
        let x = &self.node(a).value;
        let out: Vec<T> = src.iter().map(|&s| x[s]).collect();
        let out_shape = perm.iter().map(|&p| shape[p]).collect();
        Ok(self.push(
            Op::Permute {
                input: a,
                perm: perm.to_vec(),
            },
            &[a],
            out_shape,
            out,
        ))
    }

    /// Splits the last axis into overlapping frames: `[..., T] -> [..., n, length]`
    /// with `n = (T - length) / hop + 1`. No padding.
    pub fn frame(&mut self, a: Var, length: usize, hop: usize) -> Result<Var> {
        let mut shape = self.node(a).shape.clone();
        let len = last_axis("frame", &shape)?;
        if length == 0 || hop == 0 {
            return Err(TensorError::invalid("frame", "frame length and hop must be >= 1"));
        }
        if len < length {
            return Err(TensorError::invalid(
                "frame",
                format!("signal of length {len} is shorter than one frame ({length})"),
            ));
        }
        let n = (len - length) / hop + 1;
        let x = &self.node(a).value;
        let mut out = Vec::with_capacity(x.len() / len * n * length);
        for row in x.chunks_exact(len) {
            for f in 0..n {
                out.extend_from_slice(&row[f * hop..f * hop + length]);
            }
        }
        shape.pop();
        shape.push(n);
        shape.push(length);
        Ok(self.push(Op::Frame { input: a, length, hop }, &[a], shape, out))
    }

    /// Real DFT of the last axis, zero-padded to `n_fft`:
    /// `[..., L] -> [..., 2, n_fft/2 + 1]` with real parts in plane 0 and
    /// imaginary parts in plane 1.
    pub fn rfft(&mut self, a: Var, n_fft: usize) -> Result<Var> {
        let mut shape = self.node(a).shape.clone();
        let len = last_axis("rfft", &shape)?;
        if len == 0 || len > n_fft {
            return Err(TensorError::invalid(
                "rfft",
                format!("frame length {len} must be in 1..={n_fft}"),
            ));
        }
        let plan = Fft::<T>::new(n_fft)?;
        let bins = n_fft / 2 + 1;
        let x = &self.node(a).value;
        let rows = x.len() / len;
        let mut out = vec![T::zero(); rows * 2 * bins];
        let mut scratch = RfftScratch::new();
        for (row, o) in x.chunks_exact(len).zip(out.chunks_exact_mut(2 * bins)) {
            let (re, im) = o.split_at_mut(bins);
            plan.rfft(row, re, im, &mut scratch);
        }
        shape.pop();
        shape.push(2);
        shape.push(bins);
        Ok(self.push(Op::Rfft { input: a, n_fft }, &[a], shape, out))
    }

    /// `max(sqrt(re^2 + im^2), floor)` over a `[..., 2, bins]` packed spectrum.
    pub fn complex_abs(&mut self, a: Var, floor: f64) -> Result<Var> {
        let mut shape = self.node(a).shape.clone();
        let r = shape.len();
        if r < 2 || shape[r - 2] != 2 || shape[r - 1] == 0 {
            return Err(TensorError::invalid(
                "complex_abs",
                format!("expected [..., 2, bins], got {shape:?}"),
            ));
        }
        let bins = shape[r - 1];
        let fl = T::from_f64(floor);
        let x = &self.node(a).value;
        let mut out = Vec::with_capacity(x.len() / 2);
        for pair in x.chunks_exact(2 * bins) {
            let (re, im) = pair.split_at(bins);
            out.extend(re.iter().zip(im).map(|(&u, &v)| (u * u + v * v).sqrt().max(fl)));
        }
        shape.remove(r - 2);
        Ok(self.push(Op::ComplexAbs { input: a, floor }, &[a], shape, out))
    }

    // ---------------------------------------------------------------- backward

    /// Accumulates d`loss`/d`leaf` into every reachable leaf that requires a
    /// gradient. Repeated calls add up until [`Graph::zero_grads`].
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.node(loss).value.len() != 1 {
            return Err(TensorError::NonScalarLoss(self.node(loss).shape.clone()));
        }
        if !self.node(loss).requires_grad {
            return Ok(());
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            if let Op::Leaf = self.nodes[i].op {
                let n = &mut self.nodes[i];
                let acc = n.grad.get_or_insert_with(|| vec![T::zero(); g.len()]);
                for (a, &d) in acc.iter_mut().zip(&g) {
                    *a += d;
                }
                continue;
            }
            self.propagate(i, &g, &mut grads);
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => unreachable!("leaves handled by backward"),
            Op::Unary(op, a) => {
                let x = &self.node(*a).value;
                let y = &node.value;
                if let Some(ga) = self.grad_buf(grads, *a) {
                    let d = unary_derivative::<T>(*op);
                    for j in 0..g.len() {
                        ga[j] += g[j] * d(x[j], y[j]);
                    }
                }
            }
            Op::Binary(op, a, b) => {
                let (x, y) = (&self.node(*a).value, &self.node(*b).value);
                let (lx, ly) = (x.len(), y.len());
                if let Some(ga) = self.grad_buf(grads, *a) {
                    for j in 0..g.len() {
                        let d = match op {
                            BinaryOp::Add | BinaryOp::Sub => T::one(),
                            BinaryOp::Mul => y[j % ly],
                            BinaryOp::Div => T::one() / y[j % ly],
                        };
                        ga[j % lx] += g[j] * d;
                    }
                }
                if let Some(gb) = self.grad_buf(grads, *b) {
                    for j in 0..g.len() {
                        let d = match op {
                            BinaryOp::Add => T::one(),
                            BinaryOp::Sub => -T::one(),
                            BinaryOp::Mul => x[j % lx],
                            BinaryOp::Div => {
                                let v = y[j % ly];
                                -x[j % lx] / (v * v)
                            }
                        };
                        gb[j % ly] += g[j] * d;
                    }
                }
            }
            Op::Reduce { op, input, axes } => {
                let x = &self.node(*input).value;
                let (map, _, count) = reduce_index_map(&self.node(*input).shape, axes);
                if let Some(ga) = self.grad_buf(grads, *input) {
                    let inv = T::one() / T::from_f64(count as f64);
                    for (j, &m) in map.iter().enumerate() {
                        ga[j] += match op {
                            ReduceOp::Sum => g[m],
                            ReduceOp::Mean => g[m] * inv,
                            ReduceOp::L1Norm => g[m] * sign(x[j]),
                            ReduceOp::FrobeniusNorm => {
                                let nrm = node.value[m];
                                if nrm > T::zero() {
                                    g[m] * x[j] / nrm
                                } else {
                                    T::zero()
                                }
                            }
                        };
                    }
                }
            }
            Op::Conv1d { x, w, bias, geom } => {
                let (xv, wv) = (&self.node(*x).value, &self.node(*w).value);
                let (mut gx, mut gw, mut gb) = self.take3(grads, *x, *w, *bias);
                kernels::conv1d_backward(xv, wv, g, geom, gx.as_deref_mut(), gw.as_deref_mut(), gb.as_deref_mut());
                self.restore3(grads, (*x, gx), (*w, gw), bias.map(|b| (b, gb)));
            }
            Op::ConvTranspose1d { x, w, bias, geom } => {
                let (xv, wv) = (&self.node(*x).value, &self.node(*w).value);
                let (mut gx, mut gw, mut gb) = self.take3(grads, *x, *w, *bias);
                kernels::conv_transpose1d_backward(
                    xv,
                    wv,
                    g,
                    geom,
                    gx.as_deref_mut(),
                    gw.as_deref_mut(),
                    gb.as_deref_mut(),
                );
                self.restore3(grads, (*x, gx), (*w, gw), bias.map(|b| (b, gb)));
            }
            Op::Conv2d { x, w, bias, geom } => {
                let (xv, wv) = (&self.node(*x).value, &self.node(*w).value);
                let (mut gx, mut gw, mut gb) = self.take3(grads, *x, *w, *bias);
                kernels::conv2d_backward(xv, wv, g, geom, gx.as_deref_mut(), gw.as_deref_mut(), gb.as_deref_mut());
                self.restore3(grads, (*x, gx), (*w, gw), bias.map(|b| (b, gb)));
            }
            Op::RepeatInterleave { input, factor } => {
                if let Some(ga) = self.grad_buf(grads, *input) {
                    for (d, chunk) in ga.iter_mut().zip(g.chunks_exact(*factor)) {
                        *d += chunk.iter().copied().sum::<T>();
                    }
                }
            }
            Op::AvgPool1d { input, kernel, stride } => {
                let len = *self.node(*input).shape.last().expect("rank >= 1");
                let len_out = *node.shape.last().expect("rank >= 1");
                let inv = T::from_f64(1.0 / *kernel as f64);
                if let Some(ga) = self.grad_buf(grads, *input) {
                    for (grow, gout) in ga.chunks_exact_mut(len).zip(g.chunks_exact(len_out)) {
                        for (t, &gv) in gout.iter().enumerate() {
                            for d in &mut grow[t * stride..t * stride + kernel] {
                                *d += gv * inv;
                            }
                        }
                    }
                }
            }
            Op::Pad1d { input, left, right, mode } => {
                let len = *self.node(*input).shape.last().expect("rank >= 1");
                let len_out = len + left + right;
                if let Some(ga) = self.grad_buf(grads, *input) {
                    for (grow, gout) in ga.chunks_exact_mut(len).zip(g.chunks_exact(len_out)) {
                        for (p, &gv) in gout.iter().enumerate() {
                            let src = p as isize - *left as isize;
                            match mode {
                                PadMode::Zero => {
                                    if src >= 0 && src < len as isize {
                                        grow[src as usize] += gv;
                                    }
                                }
                                PadMode::Reflect => grow[reflect_index(src, len)] += gv,
                            }
                        }
                    }
                }
            }
            Op::Reshape(a) => {
                if let Some(ga) = self.grad_buf(grads, *a) {
                    for (d, &gv) in ga.iter_mut().zip(g) {
                        *d += gv;
                    }
                }
            }
            Op::Slice { input, axis, start } => {
                let in_shape = &self.node(*input).shape;
                let outer: usize = in_shape[..*axis].iter().product();
                let inner: usize = in_shape[axis + 1..].iter().product();
                let dim = in_shape[*axis];
                let width = node.shape[*axis];
                if let Some(ga) = self.grad_buf(grads, *input) {
                    for o in 0..outer {
                        let dst = &mut ga[(o * dim + start) * inner..(o * dim + start + width) * inner];
                        let src = &g[o * width * inner..(o + 1) * width * inner];
                        for (d, &s) in dst.iter_mut().zip(src) {
                            *d += s;
                        }
                    }
                }
            }
            Op::Concat { inputs, axis } => {
                let outer: usize = node.shape[..*axis].iter().product();
                let inner: usize = node.shape[axis + 1..].iter().product();
                let total = node.shape[*axis];
                let mut offset = 0;
                for &v in inputs {
                    let d = self.node(v).shape[*axis];
                    if let Some(gv) = self.grad_buf(grads, v) {
                        for o in 0..outer {
                            let src = &g[(o * total + offset) * inner..(o * total + offset + d) * inner];
                            for (dst, &s) in gv[o * d * inner..(o + 1) * d * inner].iter_mut().zip(src) {
                                *dst += s;
                            }
                        }
                    }
                    offset += d;
                }
            }
            Op::Permute { input, perm } => {
                let src = permute_source_index(&self.node(*input).shape, perm);
                if let Some(ga) = self.grad_buf(grads, *input) {
                    for (&s, &gv) in src.iter().zip(g) {
                        ga[s] += gv;
                    }
                }
            }
            Op::Frame { input, length, hop } => {
                let len = *self.node(*input).shape.last().expect("rank >= 1");
                let n = node.shape[node.shape.len() - 2];
                if let Some(ga) = self.grad_buf(grads, *input) {
                    for (grow, gframes) in ga.chunks_exact_mut(len).zip(g.chunks_exact(n * length)) {
                        for (f, gf) in gframes.chunks_exact(*length).enumerate() {
                            for (d, &gv) in grow[f * hop..f * hop + length].iter_mut().zip(gf) {
                                *d += gv;
                            }
                        }
                    }
                }
            }
            Op::Rfft { input, n_fft } => {
                let len = *self.node(*input).shape.last().expect("rank >= 1");
                let bins = n_fft / 2 + 1;
                let plan = Fft::<T>::new(*n_fft).expect("validated in forward");
                let mut scratch = RfftScratch::new();
                if let Some(ga) = self.grad_buf(grads, *input) {
                    for (grow, gspec) in ga.chunks_exact_mut(len).zip(g.chunks_exact(2 * bins)) {
                        let (gre, gim) = gspec.split_at(bins);
                        plan.rfft_adjoint(gre, gim, grow, &mut scratch);
                    }
                }
            }
            Op::ComplexAbs { input, floor } => {
                let bins = *node.shape.last().expect("rank >= 1");
                let x = &self.node(*input).value;
                let fl = T::from_f64(*floor);
                if let Some(ga) = self.grad_buf(grads, *input) {
                    for ((gpair, xpair), (gm, m)) in ga
                        .chunks_exact_mut(2 * bins)
                        .zip(x.chunks_exact(2 * bins))
                        .zip(g.chunks_exact(bins).zip(node.value.chunks_exact(bins)))
                    {
                        let (gre, gim) = gpair.split_at_mut(bins);
                        let (re, im) = xpair.split_at(bins);
                        for k in 0..bins {
                            let mag = (re[k] * re[k] + im[k] * im[k]).sqrt();
                            if mag > fl && mag > T::zero() {
                                let s = gm[k] / m[k];
                                gre[k] += s * re[k];
                                gim[k] += s * im[k];
                            }
                        }
                    }
                }
            }
        }
    }

    fn grad_buf<'a>(&self, grads: &'a mut [Option<Vec<T>>], v: Var) -> Option<&'a mut Vec<T>> {
        let n = self.node(v);
        if !n.requires_grad {
            return None;
        }
        Some(grads[v.0].get_or_insert_with(|| vec![T::zero(); n.value.len()]))
    }

    #[allow(clippy::type_complexity)]
    fn take3(
        &self,
        grads: &mut [Option<Vec<T>>],
        x: Var,
        w: Var,
        bias: Option<Var>,
    ) -> (Option<Vec<T>>, Option<Vec<T>>, Option<Vec<T>>) {
        let mut take = |v: Var| self.grad_buf(grads, v).map(std::mem::take);
        let gx = take(x);
        let gw = take(w);
        let gb = bias.and_then(take);
        (gx, gw, gb)
    }

    fn restore3(
        &self,
        grads: &mut [Option<Vec<T>>],
        x: (Var, Option<Vec<T>>),
        w: (Var, Option<Vec<T>>),
        bias: Option<(Var, Option<Vec<T>>)>,
    ) {
        for (v, g) in [Some(x), Some(w), bias].into_iter().flatten() {
            if let Some(g) = g {
                grads[v.0] = Some(g);
            }
        }
    }
}

#[inline]
fn sign<T: Real>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

fn unary_forward<T: Real>(op: UnaryOp) -> Box<dyn Fn(T) -> T> {
    match op {
        UnaryOp::Neg => Box::new(|v: T| -v),
        UnaryOp::Abs => Box::new(|v: T| v.abs()),
        UnaryOp::Tanh => Box::new(|v: T| v.tanh()),
        UnaryOp::Sin => Box::new(|v: T| v.sin()),
        UnaryOp::LeakyRelu(s) => {
            let s = T::from_f64(s);
            Box::new(move |v: T| if v > T::zero() { v } else { v * s })
        }
        UnaryOp::Relu => Box::new(|v: T| if v > T::zero() { v } else { T::zero() }),
        UnaryOp::Log => Box::new(|v: T| v.ln()),
        UnaryOp::Square => Box::new(|v: T| v * v),
        UnaryOp::Sqrt => Box::new(|v: T| v.sqrt()),
        UnaryOp::Exp => Box::new(|v: T| v.exp()),
        UnaryOp::Scale(c) => {
            let c = T::from_f64(c);
            Box::new(move |v: T| v * c)
        }
        UnaryOp::AddScalar(c) => {
            let c = T::from_f64(c);
            Box::new(move |v: T| v + c)
        }
        UnaryOp::ClampMin(f) => {
            let f = T::from_f64(f);
            Box::new(move |v: T| if v > f { v } else { f })
        }
    }
}

/// Derivative as a function of (input, output).
fn unary_derivative<T: Real>(op: UnaryOp) -> Box<dyn Fn(T, T) -> T> {
    match op {
        UnaryOp::Neg => Box::new(|_, _| -T::one()),
        UnaryOp::Abs => Box::new(|x, _| sign(x)),
        UnaryOp::Tanh => Box::new(|_, y| T::one() - y * y),
        UnaryOp::Sin => Box::new(|x: T, _| x.cos()),
        UnaryOp::LeakyRelu(s) => {
            let s = T::from_f64(s);
            Box::new(move |x, _| if x > T::zero() { T::one() } else { s })
        }
        UnaryOp::Relu => Box::new(|x, _| if x > T::zero() { T::one() } else { T::zero() }),
        UnaryOp::Log => Box::new(|x, _| T::one() / x),
        UnaryOp::Square => Box::new(|x, _| x + x),
        UnaryOp::Sqrt => Box::new(|_, y| {
            if y > T::zero() {
                T::from_f64(0.5) / y
            } else {
                T::zero()
            }
        }),
        UnaryOp::Exp => Box::new(|_, y| y),
        UnaryOp::Scale(c) => {
            let c = T::from_f64(c);
            Box::new(move |_, _| c)
        }
        UnaryOp::AddScalar(_) => Box::new(|_, _| T::one()),
        UnaryOp::ClampMin(f) => {
            let f = T::from_f64(f);
            Box::new(move |x, _| if x > f { T::one() } else { T::zero() })
        }
    }
}
