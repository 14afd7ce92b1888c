//! Reverse-mode tape.
//!
//! Each differentiable operation appends a node holding its output value and
//! enough saved state to compute vector-Jacobian products. [`Tape::backward`]
//! replays the nodes in reverse order.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use super::conv::{conv3d_forward, conv3d_grad_input, conv3d_grad_kernel, Conv3dSpec};
use super::sparse::SparsePlan;
use super::{broadcast_binary, broadcast_index_map, numel, reduce_to_shape, Result, Tensor, TensorError};

#[derive(Debug)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Neg(usize),
    Scale(usize, f64),
    Offset(usize),
    Exp(usize),
    Log(usize),
    Tanh(usize),
    Relu(usize),
    LeakyRelu(usize, f64),
    Sigmoid(usize),
    Abs(usize),
    Square(usize),
    MatMul(usize, usize),
    Reshape(usize),
    Slice { src: usize, axis: usize, start: usize },
    Concat { srcs: Vec<usize>, axis: usize },
    SumAll(usize),
    MeanAll(usize),
    SumAxis { src: usize, axis: usize },
    MaxAll { src: usize, argmax: usize },
    MaxAxis { src: usize, argmax: Vec<usize> },
    Permute { src: usize, perm: Vec<usize> },
    IndexSelect { src: usize, axis: usize, indices: Vec<usize> },
    Conv3d { input: usize, kernel: usize, spec: Conv3dSpec },
    Upsample { src: usize, factor: usize },
    Sparse { base: Option<usize>, src: usize, plan: Arc<SparsePlan> },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Record of differentiable operations for one computation.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

/// Gradients of a scalar with respect to every `requires_grad` leaf.
#[derive(Debug, Default)]
pub struct Gradients {
    by_id: HashMap<usize, Tensor>,
}

impl Gradients {
    pub fn get(&self, v: Var<'_>) -> Option<&Tensor> {
        self.by_id.get(&v.id)
    }

    pub fn wrt(&self, v: Var<'_>) -> Result<&Tensor> {
        self.get(v).ok_or_else(|| TensorError::Contract(format!("no gradient recorded for Var#{}", v.id)))
    }

    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
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

    /// Drops every recorded node and saved intermediate.
    pub fn clear(&mut self) {
        self.nodes.get_mut().clear();
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op, requires_grad });
        Var { tape: self, id: nodes.len() - 1 }
    }

    /// A constant input; no gradient is accumulated for it.
    pub fn constant(&self, t: Tensor) -> Var<'_> {
        self.push(t, Op::Leaf, false)
    }

    /// A differentiable input.
    pub fn param(&self, t: Tensor) -> Var<'_> {
        self.push(t, Op::Leaf, true)
    }

    fn value(&self, id: usize) -> Tensor {
        self.nodes.borrow()[id].value.clone()
    }

    fn requires(&self, id: usize) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    /// Reverse sweep from a scalar result.
    pub fn backward(&self, result: Var<'_>) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        let root = &nodes[result.id];
        if root.value.len() != 1 {
            return Err(TensorError::Contract(format!(
                "backward needs a scalar result, got shape {:?}",
                root.value.shape()
            )));
        }
        if !root.requires_grad {
            return Err(TensorError::Contract("result does not depend on any differentiable input".into()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; result.id + 1];
        grads[result.id] = Some(vec![1.0]);
        let mut out = Gradients::default();
        for id in (0..=result.id).rev() {
            let Some(dy) = grads[id].take() else { continue };
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            let mut send = |pid: usize, g: Vec<f64>| {
                if !nodes[pid].requires_grad {
                    return;
                }
                match &mut grads[pid] {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                    slot @ None => *slot = Some(g),
                }
            };
            let val = |pid: usize| &nodes[pid].value;
            let y = &node.value;
            match &node.op {
                Op::Leaf => {
                    out.by_id.insert(id, Tensor::from_parts(y.shape().to_vec(), dy));
                }
                Op::Add(a, b) => {
                    send(*a, reduce_to_shape(&dy, y.shape(), val(*a).shape()));
                    send(*b, reduce_to_shape(&dy, y.shape(), val(*b).shape()));
                }
                Op::Sub(a, b) => {
                    send(*a, reduce_to_shape(&dy, y.shape(), val(*a).shape()));
                    let gb = reduce_to_shape(&dy, y.shape(), val(*b).shape());
                    send(*b, gb.into_iter().map(|v| -v).collect());
                }
                Op::Mul(a, b) | Op::Div(a, b) => {
                    let (av, bv) = (val(*a), val(*b));
                    let ia = broadcast_index_map(av.shape(), y.shape());
                    let ib = broadcast_index_map(bv.shape(), y.shape());
                    let is_div = matches!(node.op, Op::Div(..));
                    if nodes[*a].requires_grad {
                        let g: Vec<f64> = dy
                            .iter()
                            .zip(&ib)
                            .map(|(d, &j)| if is_div { d / bv.data()[j] } else { d * bv.data()[j] })
                            .collect();
                        send(*a, reduce_to_shape(&g, y.shape(), av.shape()));
                    }
                    if nodes[*b].requires_grad {
                        let g: Vec<f64> = dy
                            .iter()
                            .zip(ia.iter().zip(&ib))
                            .map(|(d, (&i, &j))| {
                                if is_div {
                                    let bj = bv.data()[j];
                                    -d * av.data()[i] / (bj * bj)
                                } else {
                                    d * av.data()[i]
                                }
                            })
                            .collect();
                        send(*b, reduce_to_shape(&g, y.shape(), bv.shape()));
                    }
                }
                Op::Neg(a) => send(*a, dy.iter().map(|d| -d).collect()),
                Op::Scale(a, s) => send(*a, dy.iter().map(|d| d * s).collect()),
                Op::Offset(a) => send(*a, dy),
                Op::Exp(a) => send(*a, dy.iter().zip(y.data()).map(|(d, e)| d * e).collect()),
                Op::Log(a) => send(*a, dy.iter().zip(val(*a).data()).map(|(d, x)| d / x).collect()),
                Op::Tanh(a) => send(*a, dy.iter().zip(y.data()).map(|(d, t)| d * (1.0 - t * t)).collect()),
                Op::Relu(a) => {
                    send(*a, dy.iter().zip(val(*a).data()).map(|(d, x)| if *x > 0.0 { *d } else { 0.0 }).collect())
                }
                Op::LeakyRelu(a, slope) => send(
                    *a,
                    dy.iter().zip(val(*a).data()).map(|(d, x)| if *x > 0.0 { *d } else { d * slope }).collect(),
                ),
                Op::Sigmoid(a) => send(*a, dy.iter().zip(y.data()).map(|(d, s)| d * s * (1.0 - s)).collect()),
                Op::Abs(a) => send(
                    *a,
                    dy.iter()
                        .zip(val(*a).data())
                        .map(|(d, x)| {
                            if *x > 0.0 {
                                *d
                            } else if *x < 0.0 {
                                -d
                            } else {
                                0.0
                            }
                        })
                        .collect(),
                ),
                Op::Square(a) => send(*a, dy.iter().zip(val(*a).data()).map(|(d, x)| 2.0 * d * x).collect()),
                Op::MatMul(a, b) => {
                    let (av, bv) = (val(*a), val(*b));
                    let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
                    if nodes[*a].requires_grad {
                        // dA = dY · Bᵀ
                        let mut g = vec![0.0; m * k];
                        for i in 0..m {
                            for p in 0..k {
                                let brow = &bv.data()[p * n..(p + 1) * n];
                                g[i * k + p] = dy[i * n..(i + 1) * n].iter().zip(brow).map(|(x, y)| x * y).sum();
                            }
                        }
                        send(*a, g);
                    }
                    if nodes[*b].requires_grad {
                        // dB = Aᵀ · dY
                        let mut g = vec![0.0; k * n];
                        for i in 0..m {
                            for p in 0..k {
                                let aip = av.data()[i * k + p];
                                if aip == 0.0 {
                                    continue;
                                }
                                let row = &mut g[p * n..(p + 1) * n];
                                row.iter_mut().zip(&dy[i * n..(i + 1) * n]).for_each(|(r, d)| *r += aip * d);
                            }
                        }
                        send(*b, g);
                    }
                }
                Op::Reshape(a) => send(*a, dy),
                Op::Slice { src, axis, start } => {
                    let s = val(*src).shape();
                    let (outer, inner) = outer_inner(s, *axis);
                    let (full, part) = (s[*axis], y.shape()[*axis]);
                    let mut g = vec![0.0; numel(s)];
                    for o in 0..outer {
                        let dst = (o * full + start) * inner;
                        let srco = o * part * inner;
                        g[dst..dst + part * inner].copy_from_slice(&dy[srco..srco + part * inner]);
                    }
                    send(*src, g);
                }
                Op::Concat { srcs, axis } => {
                    let (outer, inner) = outer_inner(y.shape(), *axis);
                    let total = y.shape()[*axis];
                    let mut offset = 0;
                    for &s in srcs {
                        let len = val(s).shape()[*axis];
                        if nodes[s].requires_grad {
                            let mut g = Vec::with_capacity(outer * len * inner);
                            for o in 0..outer {
                                let from = (o * total + offset) * inner;
                                g.extend_from_slice(&dy[from..from + len * inner]);
                            }
                            send(s, g);
                        }
                        offset += len;
                    }
                }
                Op::SumAll(a) => send(*a, vec![dy[0]; val(*a).len()]),
                Op::MeanAll(a) => {
                    let n = val(*a).len();
                    send(*a, vec![dy[0] / n as f64; n])
                }
                Op::SumAxis { src, axis } => {
                    let s = val(*src).shape();
                    let (outer, inner) = outer_inner(s, *axis);
                    let len = s[*axis];
                    let mut g = vec![0.0; numel(s)];
                    for o in 0..outer {
                        for l in 0..len {
                            let dst = (o * len + l) * inner;
                            g[dst..dst + inner].copy_from_slice(&dy[o * inner..(o + 1) * inner]);
                        }
                    }
                    send(*src, g);
                }
                Op::MaxAll { src, argmax } => {
                    let mut g = vec![0.0; val(*src).len()];
                    g[*argmax] = dy[0];
                    send(*src, g);
                }
                Op::MaxAxis { src, argmax } => {
                    let mut g = vec![0.0; val(*src).len()];
                    for (d, &i) in dy.iter().zip(argmax) {
                        g[i] += d;
                    }
                    send(*src, g);
                }
                Op::Permute { src, perm } => {
                    let mut inv = vec![0; perm.len()];
                    for (i, &p) in perm.iter().enumerate() {
                        inv[p] = i;
                    }
                    send(*src, permute_data(&dy, y.shape(), &inv));
                }
                Op::IndexSelect { src, axis, indices } => {
                    let s = val(*src).shape();
                    let (outer, inner) = outer_inner(s, *axis);
                    let len = s[*axis];
                    let mut g = vec![0.0; numel(s)];
                    for o in 0..outer {
                        for (k, &i) in indices.iter().enumerate() {
                            let dst = (o * len + i) * inner;
                            let from = (o * indices.len() + k) * inner;
                            g[dst..dst + inner].iter_mut().zip(&dy[from..from + inner]).for_each(|(a, b)| *a += b);
                        }
                    }
                    send(*src, g);
                }
                Op::Conv3d { input, kernel, spec } => {
                    if nodes[*input].requires_grad {
                        send(*input, conv3d_grad_input(&dy, val(*kernel), val(*input).shape(), spec)?);
                    }
                    if nodes[*kernel].requires_grad {
                        send(*kernel, conv3d_grad_kernel(&dy, val(*input), val(*kernel).shape(), spec)?);
                    }
                }
                Op::Upsample { src, factor } => {
                    let s = val(*src).shape();
                    let nd = s.len();
                    let (h, w) = (s[nd - 2], s[nd - 1]);
                    let planes = numel(&s[..nd - 2]);
                    let (oh, ow) = (h * factor, w * factor);
                    let mut g = vec![0.0; numel(s)];
                    for p in 0..planes {
                        for yy in 0..oh {
                            for xx in 0..ow {
                                g[(p * h + yy / factor) * w + xx / factor] += dy[(p * oh + yy) * ow + xx];
                            }
                        }
                    }
                    send(*src, g);
                }
                Op::Sparse { base, src, plan } => {
                    let channels = val(*src).shape()[0];
                    if let Some(b) = base {
                        if nodes[*b].requires_grad {
                            send(*b, plan.grad_base(&dy, channels));
                        }
                    }
                    if nodes[*src].requires_grad {
                        send(*src, plan.grad_src(&dy, channels));
                    }
                }
            }
        }
        Ok(out)
    }
}

/// `(product of dims before axis, product of dims after axis)`.
fn outer_inner(shape: &[usize], axis: usize) -> (usize, usize) {
    (numel(&shape[..axis]), numel(&shape[axis + 1..]))
}

fn permute_data(data: &[f64], shape: &[usize], perm: &[usize]) -> Vec<f64> {
    let nd = shape.len();
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let mut in_strides = vec![1; nd];
    for i in (0..nd.saturating_sub(1)).rev() {
        in_strides[i] = in_strides[i + 1] * shape[i + 1];
    }
    let strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let total = data.len();
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; nd];
    let mut src = 0usize;
    for _ in 0..total {
        out.push(data[src]);
        for ax in (0..nd).rev() {
            idx[ax] += 1;
            src += strides[ax];
            if idx[ax] < out_shape[ax] {
                break;
            }
            src -= strides[ax] * idx[ax];
            idx[ax] = 0;
        }
    }
    out
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Tensor {
        self.tape.value(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.requires(self.id)
    }

    fn same_tape(&self, other: &Var<'t>) -> Result<()> {
        if std::ptr::eq(self.tape, other.tape) {
            Ok(())
        } else {
            Err(TensorError::Contract("operands recorded on different tapes".into()))
        }
    }

    fn unary(self, value: Tensor, op: Op) -> Var<'t> {
        let rg = self.requires_grad();
        self.tape.push(value, op, rg)
    }

    fn binary(self, other: Var<'t>, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var<'t>> {
        self.same_tape(&other)?;
        let value = broadcast_binary(&self.value(), &other.value(), f)?;
        let rg = self.requires_grad() || other.requires_grad();
        Ok(self.tape.push(value, op, rg))
    }

    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, |a, b| a + b, Op::Add(self.id, other.id))
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, |a, b| a - b, Op::Sub(self.id, other.id))
    }

    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, |a, b| a * b, Op::Mul(self.id, other.id))
    }

    pub fn div(self, other: Var<'t>) -> Result<Var<'t>> {
        if other.value().data().contains(&0.0) {
            return Err(TensorError::Numeric("division by zero".into()));
        }
        self.binary(other, |a, b| a / b, Op::Div(self.id, other.id))
    }

    pub fn neg(self) -> Var<'t> {
        let v = self.value().map(|x| -x);
        self.unary(v, Op::Neg(self.id))
    }

    pub fn scale(self, s: f64) -> Var<'t> {
        let v = self.value().map(|x| x * s);
        self.unary(v, Op::Scale(self.id, s))
    }

    pub fn add_scalar(self, s: f64) -> Var<'t> {
        let v = self.value().map(|x| x + s);
        self.unary(v, Op::Offset(self.id))
    }

    pub fn exp(self) -> Result<Var<'t>> {
        let v = self.value().map(f64::exp);
        if !v.all_finite() {
            return Err(TensorError::Numeric("exp overflow".into()));
        }
        Ok(self.unary(v, Op::Exp(self.id)))
    }

    pub fn log(self) -> Result<Var<'t>> {
        let x = self.value();
        if x.data().iter().any(|&v| v <= 0.0 || v.is_nan()) {
            return Err(TensorError::Numeric("log of non-positive value".into()));
        }
        Ok(self.unary(x.map(f64::ln), Op::Log(self.id)))
    }

    pub fn tanh(self) -> Var<'t> {
        let v = self.value().map(f64::tanh);
        self.unary(v, Op::Tanh(self.id))
    }

    pub fn relu(self) -> Var<'t> {
        let v = self.value().map(|x| x.max(0.0));
        self.unary(v, Op::Relu(self.id))
    }

    pub fn leaky_relu(self, slope: f64) -> Var<'t> {
        let v = self.value().map(|x| if x > 0.0 { x } else { slope * x });
        self.unary(v, Op::LeakyRelu(self.id, slope))
    }

    pub fn sigmoid(self) -> Var<'t> {
        let v = self.value().map(sigmoid);
        self.unary(v, Op::Sigmoid(self.id))
    }

    pub fn abs(self) -> Var<'t> {
        let v = self.value().map(f64::abs);
        self.unary(v, Op::Abs(self.id))
    }

    pub fn square(self) -> Var<'t> {
        let v = self.value().map(|x| x * x);
        self.unary(v, Op::Square(self.id))
    }

    /// Matrix product of `[m, k]` and `[k, n]`.
    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&other)?;
        let (a, b) = (self.value(), other.value());
        if a.ndim() != 2 || b.ndim() != 2 || a.shape()[1] != b.shape()[0] {
            return Err(TensorError::Dimension(format!("matmul of {:?} and {:?}", a.shape(), b.shape())));
        }
        let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let aip = a.data()[i * k + p];
                if aip == 0.0 {
                    continue;
                }
                row.iter_mut().zip(&b.data()[p * n..(p + 1) * n]).for_each(|(r, bv)| *r += aip * bv);
            }
        }
        let rg = self.requires_grad() || other.requires_grad();
        Ok(self.tape.push(Tensor::from_parts(vec![m, n], out), Op::MatMul(self.id, other.id), rg))
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Var<'t>> {
        let v = self.value().reshape(shape)?;
        Ok(self.unary(v, Op::Reshape(self.id)))
    }

    /// Contiguous range `[start, start + len)` along `axis`.
    pub fn slice(self, axis: usize, start: usize, len: usize) -> Result<Var<'t>> {
        let x = self.value();
        let s = x.shape();
        if axis >= s.len() || start + len > s[axis] {
            return Err(TensorError::Dimension(format!("slice [{start}, {}) on axis {axis} of {s:?}", start + len)));
        }
        let (outer, inner) = outer_inner(s, axis);
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let from = (o * s[axis] + start) * inner;
            data.extend_from_slice(&x.data()[from..from + len * inner]);
        }
        let mut shape = s.to_vec();
        shape[axis] = len;
        Ok(self.unary(Tensor::from_parts(shape, data), Op::Slice { src: self.id, axis, start }))
    }

    /// Gathers entries `indices` (repeats allowed) along `axis`.
    pub fn index_select(self, axis: usize, indices: &[usize]) -> Result<Var<'t>> {
        let x = self.value();
        let s = x.shape();
        if axis >= s.len() || indices.iter().any(|&i| i >= s[axis]) {
            return Err(TensorError::Dimension(format!("index_select on axis {axis} of {s:?} out of range")));
        }
        let (outer, inner) = outer_inner(s, axis);
        let mut data = Vec::with_capacity(outer * indices.len() * inner);
        for o in 0..outer {
            for &i in indices {
                let from = (o * s[axis] + i) * inner;
                data.extend_from_slice(&x.data()[from..from + inner]);
            }
        }
        let mut shape = s.to_vec();
        shape[axis] = indices.len();
        Ok(self
            .unary(Tensor::from_parts(shape, data), Op::IndexSelect { src: self.id, axis, indices: indices.to_vec() }))
    }

    pub fn permute(self, perm: &[usize]) -> Result<Var<'t>> {
        let x = self.value();
        let mut seen = vec![false; x.ndim()];
        if perm.len() != x.ndim() || perm.iter().any(|&p| p >= x.ndim() || std::mem::replace(&mut seen[p], true)) {
            return Err(TensorError::Dimension(format!("bad permutation {perm:?} for {:?}", x.shape())));
        }
        let shape: Vec<usize> = perm.iter().map(|&p| x.shape()[p]).collect();
        let data = permute_data(x.data(), x.shape(), perm);
        Ok(self.unary(Tensor::from_parts(shape, data), Op::Permute { src: self.id, perm: perm.to_vec() }))
    }

    pub fn sum(self) -> Var<'t> {
        let v = Tensor::scalar(self.value().sum());
        self.unary(v, Op::SumAll(self.id))
    }

    pub fn mean(self) -> Var<'t> {
        let x = self.value();
        let v = Tensor::scalar(x.sum() / x.len() as f64);
        self.unary(v, Op::MeanAll(self.id))
    }

    /// Sum over `axis`, removing it.
    pub fn sum_axis(self, axis: usize) -> Result<Var<'t>> {
        let x = self.value();
        let s = x.shape();
        if axis >= s.len() {
            return Err(TensorError::Dimension(format!("axis {axis} out of range for {s:?}")));
        }
        let (outer, inner) = outer_inner(s, axis);
        let len = s[axis];
        let mut data = vec![0.0; outer * inner];
        for o in 0..outer {
            for l in 0..len {
                let from = (o * len + l) * inner;
                data[o * inner..(o + 1) * inner]
                    .iter_mut()
                    .zip(&x.data()[from..from + inner])
                    .for_each(|(a, b)| *a += b);
            }
        }
        let mut shape = s.to_vec();
        shape.remove(axis);
        Ok(self.unary(Tensor::from_parts(shape, data), Op::SumAxis { src: self.id, axis }))
    }

    pub fn mean_axis(self, axis: usize) -> Result<Var<'t>> {
        let len = *self.shape().get(axis).ok_or_else(|| TensorError::Dimension(format!("axis {axis} out of range")))?;
        Ok(self.sum_axis(axis)?.scale(1.0 / len as f64))
    }

    /// Maximum over all entries; the gradient goes to the first maximiser.
    pub fn max(self) -> Result<Var<'t>> {
        let x = self.value();
        if x.is_empty() {
            return Err(TensorError::Dimension("max of empty tensor".into()));
        }
        let (argmax, m) =
            x.data()
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) });
        Ok(self.unary(Tensor::scalar(m), Op::MaxAll { src: self.id, argmax }))
    }

    /// Maximum over `axis`, removing it.
    pub fn max_axis(self, axis: usize) -> Result<Var<'t>> {
        let x = self.value();
        let s = x.shape();
        if axis >= s.len() || s[axis] == 0 {
            return Err(TensorError::Dimension(format!("max over axis {axis} of {s:?}")));
        }
        let (outer, inner) = outer_inner(s, axis);
        let len = s[axis];
        let mut data = vec![f64::NEG_INFINITY; outer * inner];
        let mut argmax = vec![0; outer * inner];
        for o in 0..outer {
            for l in 0..len {
                for i in 0..inner {
                    let src = (o * len + l) * inner + i;
                    let dst = o * inner + i;
                    if x.data()[src] > data[dst] {
                        data[dst] = x.data()[src];
                        argmax[dst] = src;
                    }
                }
            }
        }
        let mut shape = s.to_vec();
        shape.remove(axis);
        Ok(self.unary(Tensor::from_parts(shape, data), Op::MaxAxis { src: self.id, argmax }))
    }

    /// Concatenates along `axis`; all other extents must agree.
    pub fn concat(items: &[Var<'t>], axis: usize) -> Result<Var<'t>> {
        let first = items.first().ok_or_else(|| TensorError::Dimension("concat of zero tensors".into()))?;
        let values: Vec<Tensor> = items.iter().map(|v| v.value()).collect();
        let s0 = values[0].shape();
        if axis >= s0.len() {
            return Err(TensorError::Dimension(format!("concat axis {axis} out of range")));
        }
        for (v, item) in values.iter().zip(items) {
            first.same_tape(item)?;
            let s = v.shape();
            if s.len() != s0.len() || s.iter().zip(s0).enumerate().any(|(i, (a, b))| i != axis && a != b) {
                return Err(TensorError::Dimension(format!("concat of {s0:?} and {s:?}")));
            }
        }
        let (outer, inner) = outer_inner(s0, axis);
        let total: usize = values.iter().map(|v| v.shape()[axis]).sum();
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for v in &values {
                let len = v.shape()[axis];
                data.extend_from_slice(&v.data()[o * len * inner..(o + 1) * len * inner]);
            }
        }
        let mut shape = s0.to_vec();
        shape[axis] = total;
        let rg = items.iter().any(|v| v.requires_grad());
        Ok(first.tape.push(
            Tensor::from_parts(shape, data),
            Op::Concat { srcs: items.iter().map(|v| v.id).collect(), axis },
            rg,
        ))
    }

    /// 3D convolution of `[n, c, d, h, w]` with kernel `[o, c, kd, kh, kw]`.
    pub fn conv3d(self, kernel: Var<'t>, spec: Conv3dSpec) -> Result<Var<'t>> {
        self.same_tape(&kernel)?;
        let y = conv3d_forward(&self.value(), &kernel.value(), &spec)?;
        let rg = self.requires_grad() || kernel.requires_grad();
        Ok(self.tape.push(y, Op::Conv3d { input: self.id, kernel: kernel.id, spec }, rg))
    }

    /// Nearest-neighbour upsampling of the two trailing axes.
    pub fn upsample_nearest(self, factor: usize) -> Result<Var<'t>> {
        let x = self.value();
        let s = x.shape();
        if s.len() < 2 || factor == 0 {
            return Err(TensorError::Dimension(format!("cannot upsample {s:?} by {factor}")));
        }
        let nd = s.len();
        let (h, w) = (s[nd - 2], s[nd - 1]);
        let planes = numel(&s[..nd - 2]);
        let (oh, ow) = (h * factor, w * factor);
        let mut data = Vec::with_capacity(planes * oh * ow);
        for p in 0..planes {
            for yy in 0..oh {
                let row = &x.data()[(p * h + yy / factor) * w..(p * h + yy / factor + 1) * w];
                for xx in 0..ow {
                    data.push(row[xx / factor]);
                }
            }
        }
        let mut shape = s.to_vec();
        shape[nd - 2] = oh;
        shape[nd - 1] = ow;
        Ok(self.unary(Tensor::from_parts(shape, data), Op::Upsample { src: self.id, factor }))
    }

    /// Writes `self` (the source image) into `base` through a fixed sparse plan.
    pub fn sparse_into(self, base: Option<Var<'t>>, plan: Arc<SparsePlan>) -> Result<Var<'t>> {
        if let Some(b) = &base {
            self.same_tape(b)?;
        }
        let out = plan.apply(base.map(|b| b.value()).as_ref(), &self.value())?;
        let rg = self.requires_grad() || base.is_some_and(|b| b.requires_grad());
        Ok(self.tape.push(out, Op::Sparse { base: base.map(|b| b.id), src: self.id, plan }, rg))
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
