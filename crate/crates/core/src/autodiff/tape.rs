use std::cell::RefCell;
use std::fmt;
use std::rc::Rc;

use super::Tensor;
use crate::{Error, Result};

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    ScaleBy(usize, usize),
    Recip(usize),
    Concat(Vec<usize>, usize),
    Stack(Vec<usize>),
    Row(usize, usize),
    Slice(usize, usize),
    Transpose(usize),
    Sum(usize, Option<usize>),
    Mean(usize, Option<usize>),
    Softmax(usize, usize),
    Sigmoid(usize),
    Tanh(usize),
    Relu(usize),
    LeakyRelu(usize, f64),
    Exp(usize),
    Log(usize),
    CrossEntropy(usize, usize),
    BinaryCrossEntropy(usize, Vec<f64>),
    L2Loss(usize, usize),
    LayerNorm { x: usize, gain: usize, bias: usize, eps: f64 },
}

struct Node {
    value: Rc<Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Record of executed operations for one forward pass.
///
/// Leaves created with [`Tape::param`] require gradients; an operation is
/// recorded with its inputs only when at least one input requires them.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tape({} nodes)", self.len())
    }
}

/// Handle to a value on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.value().shape())
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

    pub fn param(&self, t: Tensor) -> Var<'_> {
        self.push(t, Op::Leaf, true)
    }

    pub fn constant(&self, t: Tensor) -> Var<'_> {
        self.push(t, Op::Leaf, false)
    }

    pub fn vector(&self, data: &[f64]) -> Var<'_> {
        self.constant(Tensor::vector(data.to_vec()))
    }

    pub fn scalar(&self, x: f64) -> Var<'_> {
        self.constant(Tensor::scalar(x))
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        nodes.push(Node {
            value: Rc::new(value),
            op,
            requires_grad,
        });
        Var { tape: self, id }
    }

    fn value(&self, id: usize) -> Rc<Tensor> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    fn requires(&self, id: usize) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    fn record(&self, value: Tensor, op: Op, inputs: &[usize]) -> Var<'_> {
        let rg = inputs.iter().any(|&i| self.requires(i));
        if rg {
            self.push(value, op, true)
        } else {
            self.push(value, Op::Leaf, false)
        }
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        assert!(std::ptr::eq(self, loss.tape), "loss belongs to another tape");
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id];
        if root.value.numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                root.value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.id + 1];
        grads[loss.id] = Some(vec![1.0]);
        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            backprop(&nodes, id, &g, &mut grads);
            grads[id] = Some(g);
        }
        let shapes = nodes[..=loss.id]
            .iter()
            .map(|n| n.value.shape().to_vec())
            .collect();
        Ok(Gradients { grads, shapes })
    }
}

/// Gradients of one backward pass, addressed by the [`Var`]s of its tape.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    pub fn get(&self, v: Var<'_>) -> Option<Tensor> {
        let g = self.grads.get(v.id)?.as_ref()?;
        Some(Tensor::new(self.shapes[v.id].clone(), g.clone()).expect("gradient shape matches value"))
    }

    /// Gradient of `v`, zeros when `v` did not influence the loss.
    pub fn get_or_zeros(&self, v: Var<'_>) -> Tensor {
        self.get(v).unwrap_or_else(|| Tensor::zeros(v.value().shape()))
    }
}

fn acc(grads: &mut [Option<Vec<f64>>], id: usize, delta: &[f64]) {
    match &mut grads[id] {
        Some(g) => g.iter_mut().zip(delta).for_each(|(a, d)| *a += d),
        slot @ None => *slot = Some(delta.to_vec()),
    }
}

// (rows, inner, cols) view of a matmul operand pair; vectors on the left are
// row vectors, on the right column vectors.
fn mm_dims(a: &[usize], b: &[usize]) -> Option<(usize, usize, usize)> {
    match (a.len(), b.len()) {
        (2, 2) if a[1] == b[0] => Some((a[0], a[1], b[1])),
        (2, 1) if a[1] == b[0] => Some((a[0], a[1], 1)),
        (1, 2) if a[0] == b[0] => Some((1, a[0], b[1])),
        _ => None,
    }
}

fn mm(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let x = a[i * k + p];
            if x == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            let crow = &mut c[i * n..(i + 1) * n];
            for (cv, bv) in crow.iter_mut().zip(brow) {
                *cv += x * bv;
            }
        }
    }
    c
}

fn transpose_raw(a: &[f64], m: usize, n: usize) -> Vec<f64> {
    let mut t = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            t[j * m + i] = a[i * n + j];
        }
    }
    t
}

/// Index lanes along `axis` (each lane is reduced / normalized together).
fn lanes(shape: &[usize], axis: usize) -> Vec<Vec<usize>> {
    match (shape.len(), axis) {
        (0, _) => vec![vec![0]],
        (1, 0) => vec![(0..shape[0]).collect()],
        (2, 1) => (0..shape[0])
            .map(|i| (0..shape[1]).map(|j| i * shape[1] + j).collect())
            .collect(),
        (2, 0) => (0..shape[1])
            .map(|j| (0..shape[0]).map(|i| i * shape[1] + j).collect())
            .collect(),
        _ => unreachable!("axis validated by caller"),
    }
}

fn reduced_shape(shape: &[usize], axis: Option<usize>) -> Vec<usize> {
    match (shape.len(), axis) {
        (_, None) | (1, Some(0)) | (0, _) => vec![],
        (2, Some(0)) => vec![shape[1]],
        (2, Some(1)) => vec![shape[0]],
        _ => unreachable!("axis validated by caller"),
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_lane(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn backprop(nodes: &[Node], id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
    let val = |i: usize| -> &Tensor { &nodes[i].value };
    let out = &nodes[id].value;
    let needs = |i: usize| nodes[i].requires_grad;
    match &nodes[id].op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            let (ta, tb) = (val(*a), val(*b));
            let (m, k, n) = mm_dims(ta.shape(), tb.shape()).expect("validated in forward");
            if needs(*a) {
                let bt = transpose_raw(tb.data(), k, n);
                acc(grads, *a, &mm(g, &bt, m, n, k));
            }
            if needs(*b) {
                let at = transpose_raw(ta.data(), m, k);
                acc(grads, *b, &mm(&at, g, k, m, n));
            }
        }
        Op::Add(a, b) => {
            if needs(*a) {
                acc(grads, *a, g);
            }
            if needs(*b) {
                let nb = val(*b).numel();
                if nb == g.len() {
                    acc(grads, *b, g);
                } else {
                    let mut s = vec![0.0; nb];
                    for row in g.chunks(nb) {
                        s.iter_mut().zip(row).for_each(|(a, x)| *a += x);
                    }
                    acc(grads, *b, &s);
                }
            }
        }
        Op::Sub(a, b) => {
            if needs(*a) {
                acc(grads, *a, g);
            }
            if needs(*b) {
                let neg: Vec<f64> = g.iter().map(|x| -x).collect();
                acc(grads, *b, &neg);
            }
        }
        Op::Mul(a, b) => {
            let (ta, tb) = (val(*a), val(*b));
            if needs(*a) {
                let d: Vec<f64> = g.iter().zip(tb.data()).map(|(g, y)| g * y).collect();
                acc(grads, *a, &d);
            }
            if needs(*b) {
                let d: Vec<f64> = g.iter().zip(ta.data()).map(|(g, x)| g * x).collect();
                acc(grads, *b, &d);
            }
        }
        Op::Scale(a, c) => {
            let d: Vec<f64> = g.iter().map(|x| x * c).collect();
            acc(grads, *a, &d);
        }
        Op::ScaleBy(a, s) => {
            let (ta, ts) = (val(*a), val(*s));
            let sv = ts.item();
            if needs(*a) {
                let d: Vec<f64> = g.iter().map(|x| x * sv).collect();
                acc(grads, *a, &d);
            }
            if needs(*s) {
                let d: f64 = g.iter().zip(ta.data()).map(|(g, x)| g * x).sum();
                acc(grads, *s, &[d]);
            }
        }
        Op::Recip(a) => {
            let x = val(*a).item();
            acc(grads, *a, &[-g[0] / (x * x)]);
        }
        Op::Concat(inputs, axis) => {
            let out_shape = out.shape();
            if out_shape.len() <= 1 || *axis == 0 {
                let mut off = 0;
                for &i in inputs {
                    let n = val(i).numel();
                    if needs(i) {
                        acc(grads, i, &g[off..off + n]);
                    }
                    off += n;
                }
            } else {
                let (rows, total) = (out_shape[0], out_shape[1]);
                let mut col = 0;
                for &i in inputs {
                    let c = val(i).cols();
                    if needs(i) {
                        let mut d = Vec::with_capacity(rows * c);
                        for r in 0..rows {
                            d.extend_from_slice(&g[r * total + col..r * total + col + c]);
                        }
                        acc(grads, i, &d);
                    }
                    col += c;
                }
            }
        }
        Op::Stack(inputs) => {
            let d = out.cols();
            for (r, &i) in inputs.iter().enumerate() {
                if needs(i) {
                    acc(grads, i, &g[r * d..(r + 1) * d]);
                }
            }
        }
        Op::Row(a, r) => {
            let ta = val(*a);
            let c = ta.cols();
            let mut d = vec![0.0; ta.numel()];
            d[r * c..(r + 1) * c].copy_from_slice(g);
            acc(grads, *a, &d);
        }
        Op::Slice(a, start) => {
            let mut d = vec![0.0; val(*a).numel()];
            d[*start..*start + g.len()].copy_from_slice(g);
            acc(grads, *a, &d);
        }
        Op::Transpose(a) => {
            let ta = val(*a);
            let (m, n) = (ta.shape()[0], ta.shape()[1]);
            acc(grads, *a, &transpose_raw(g, n, m));
        }
        Op::Sum(a, axis) | Op::Mean(a, axis) => {
            let ta = val(*a);
            let mean = matches!(nodes[id].op, Op::Mean(..));
            let mut d = vec![0.0; ta.numel()];
            match axis {
                None => {
                    let s = if mean { g[0] / ta.numel() as f64 } else { g[0] };
                    d.iter_mut().for_each(|x| *x = s);
                }
                Some(ax) => {
                    for (k, lane) in lanes(ta.shape(), *ax).iter().enumerate() {
                        let s = if mean { g[k] / lane.len() as f64 } else { g[k] };
                        for &i in lane {
                            d[i] = s;
                        }
                    }
                }
            }
            acc(grads, *a, &d);
        }
        Op::Softmax(a, axis) => {
            let y = out.data();
            let mut d = vec![0.0; y.len()];
            for lane in lanes(out.shape(), *axis) {
                let dot: f64 = lane.iter().map(|&i| g[i] * y[i]).sum();
                for &i in &lane {
                    d[i] = y[i] * (g[i] - dot);
                }
            }
            acc(grads, *a, &d);
        }
        Op::Sigmoid(a) => {
            let d: Vec<f64> = g.iter().zip(out.data()).map(|(g, y)| g * y * (1.0 - y)).collect();
            acc(grads, *a, &d);
        }
        Op::Tanh(a) => {
            let d: Vec<f64> = g.iter().zip(out.data()).map(|(g, y)| g * (1.0 - y * y)).collect();
            acc(grads, *a, &d);
        }
        Op::Relu(a) => {
            let d: Vec<f64> = g
                .iter()
                .zip(val(*a).data())
                .map(|(g, x)| if *x > 0.0 { *g } else { 0.0 })
                .collect();
            acc(grads, *a, &d);
        }
        Op::LeakyRelu(a, slope) => {
            let d: Vec<f64> = g
                .iter()
                .zip(val(*a).data())
                .map(|(g, x)| if *x > 0.0 { *g } else { g * slope })
                .collect();
            acc(grads, *a, &d);
        }
        Op::Exp(a) => {
            let d: Vec<f64> = g.iter().zip(out.data()).map(|(g, y)| g * y).collect();
            acc(grads, *a, &d);
        }
        Op::Log(a) => {
            let d: Vec<f64> = g.iter().zip(val(*a).data()).map(|(g, x)| g / x).collect();
            acc(grads, *a, &d);
        }
        Op::CrossEntropy(a, target) => {
            let mut p = softmax_lane(val(*a).data());
            p[*target] -= 1.0;
            p.iter_mut().for_each(|x| *x *= g[0]);
            acc(grads, *a, &p);
        }
        Op::BinaryCrossEntropy(a, labels) => {
            let d: Vec<f64> = val(*a)
                .data()
                .iter()
                .zip(labels)
                .map(|(z, y)| g[0] * (sigmoid(*z) - y))
                .collect();
            acc(grads, *a, &d);
        }
        Op::L2Loss(a, b) => {
            let diff: Vec<f64> = val(*a)
                .data()
                .iter()
                .zip(val(*b).data())
                .map(|(x, y)| 2.0 * g[0] * (x - y))
                .collect();
            if needs(*a) {
                acc(grads, *a, &diff);
            }
            if needs(*b) {
                let neg: Vec<f64> = diff.iter().map(|x| -x).collect();
                acc(grads, *b, &neg);
            }
        }
        Op::LayerNorm { x, gain, bias, eps } => {
            let tx = val(*x);
            let gamma = val(*gain).data();
            let d = tx.cols();
            let mut dx = vec![0.0; tx.numel()];
            let mut dgain = vec![0.0; d];
            let mut dbias = vec![0.0; d];
            for r in 0..tx.rows() {
                let xs = tx.row(r);
                let gr = &g[r * d..(r + 1) * d];
                let (xhat, inv) = normalize(xs, *eps);
                let mut dxhat = vec![0.0; d];
                for j in 0..d {
                    dgain[j] += gr[j] * xhat[j];
                    dbias[j] += gr[j];
                    dxhat[j] = gr[j] * gamma[j];
                }
                let sum_dxhat: f64 = dxhat.iter().sum();
                let sum_dxhat_xhat: f64 = dxhat.iter().zip(&xhat).map(|(a, b)| a * b).sum();
                let n = d as f64;
                for j in 0..d {
                    dx[r * d + j] = inv / n * (n * dxhat[j] - sum_dxhat - xhat[j] * sum_dxhat_xhat);
                }
            }
            if needs(*x) {
                acc(grads, *x, &dx);
            }
            if needs(*gain) {
                acc(grads, *gain, &dgain);
            }
            if needs(*bias) {
                acc(grads, *bias, &dbias);
            }
        }
    }
}

fn normalize(xs: &[f64], eps: f64) -> (Vec<f64>, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let inv = 1.0 / (var + eps).sqrt();
    (xs.iter().map(|x| (x - mean) * inv).collect(), inv)
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

fn check_axis(op: &'static str, t: &Tensor, axis: usize) -> Result<()> {
    if axis >= t.rank().max(1) || (t.rank() == 0 && axis > 0) {
        return Err(Error::shape(op, format!("axis {axis} out of range for {:?}", t.shape())));
    }
    Ok(())
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Rc<Tensor> {
        self.tape.value(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn data(&self) -> Vec<f64> {
        self.value().data().to_vec()
    }

    pub fn item(&self) -> f64 {
        self.value().item()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.requires(self.id)
    }

    fn unary(self, op: Op, f: impl Fn(f64) -> f64) -> Var<'t> {
        let a = self.value();
        let out = Tensor::new(a.shape().to_vec(), a.data().iter().map(|&x| f(x)).collect())
            .expect("elementwise keeps shape");
        self.tape.record(out, op, &[self.id])
    }

    /// `[m,k]·[k,n]`, `[m,k]·[k]` or `[k]·[k,n]`.
    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>> {
        let (a, b) = (self.value(), other.value());
        let (m, k, n) = mm_dims(a.shape(), b.shape())
            .ok_or_else(|| Error::shape("matmul", format!("{:?} x {:?}", a.shape(), b.shape())))?;
        let data = mm(a.data(), b.data(), m, k, n);
        let shape = match (a.rank(), b.rank()) {
            (2, 2) => vec![m, n],
            (2, 1) => vec![m],
            _ => vec![n],
        };
        let out = Tensor::new(shape, data)?;
        Ok(self.tape.record(out, Op::MatMul(self.id, other.id), &[self.id, other.id]))
    }

    /// Elementwise sum; a `[m,n]` left operand also accepts a `[n]` row bias.
    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        let (a, b) = (self.value(), other.value());
        let data: Vec<f64> = if a.shape() == b.shape() {
            a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect()
        } else if a.rank() == 2 && b.rank() == 1 && a.cols() == b.numel() {
            a.data()
                .chunks(a.cols())
                .flat_map(|row| row.iter().zip(b.data()).map(|(x, y)| x + y))
                .collect()
        } else {
            return Err(Error::shape("add", format!("{:?} + {:?}", a.shape(), b.shape())));
        };
        let out = Tensor::new(a.shape().to_vec(), data)?;
        Ok(self.tape.record(out, Op::Add(self.id, other.id), &[self.id, other.id]))
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>> {
        let (a, b) = (self.value(), other.value());
        same_shape("subtract", &a, &b)?;
        let data = a.data().iter().zip(b.data()).map(|(x, y)| x - y).collect();
        let out = Tensor::new(a.shape().to_vec(), data)?;
        Ok(self.tape.record(out, Op::Sub(self.id, other.id), &[self.id, other.id]))
    }

    /// Elementwise product.
    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>> {
        let (a, b) = (self.value(), other.value());
        same_shape("multiply", &a, &b)?;
        let data = a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect();
        let out = Tensor::new(a.shape().to_vec(), data)?;
        Ok(self.tape.record(out, Op::Mul(self.id, other.id), &[self.id, other.id]))
    }

    pub fn scale(self, c: f64) -> Var<'t> {
        self.unary(Op::Scale(self.id, c), |x| x * c)
    }

    /// Multiplies every element by a one-element tensor.
    pub fn scale_by(self, s: Var<'t>) -> Result<Var<'t>> {
        let (a, sv) = (self.value(), s.value());
        if sv.numel() != 1 {
            return Err(Error::shape("scale_by", format!("scale factor has shape {:?}", sv.shape())));
        }
        let c = sv.item();
        let out = Tensor::new(a.shape().to_vec(), a.data().iter().map(|x| x * c).collect())?;
        Ok(self.tape.record(out, Op::ScaleBy(self.id, s.id), &[self.id, s.id]))
    }

    /// `1/x` of a one-element tensor.
    pub fn recip(self) -> Result<Var<'t>> {
        let a = self.value();
        if a.numel() != 1 {
            return Err(Error::shape("recip", format!("expected one element, got {:?}", a.shape())));
        }
        let out = Tensor::new(a.shape().to_vec(), vec![1.0 / a.item()])?;
        Ok(self.tape.record(out, Op::Recip(self.id), &[self.id]))
    }

    pub fn transpose(self) -> Result<Var<'t>> {
        let a = self.value();
        if a.rank() != 2 {
            return Err(Error::shape("transpose", format!("needs a matrix, got {:?}", a.shape())));
        }
        let (m, n) = (a.shape()[0], a.shape()[1]);
        let out = Tensor::new(vec![n, m], transpose_raw(a.data(), m, n))?;
        Ok(self.tape.record(out, Op::Transpose(self.id), &[self.id]))
    }

    /// Row `r` of a matrix as a vector.
    pub fn row(self, r: usize) -> Result<Var<'t>> {
        let a = self.value();
        if a.rank() != 2 || r >= a.rows() {
            return Err(Error::shape("row", format!("row {r} of {:?}", a.shape())));
        }
        let out = Tensor::vector(a.row(r).to_vec());
        Ok(self.tape.record(out, Op::Row(self.id, r), &[self.id]))
    }

    /// Elements `start..start+len` of a vector.
    pub fn slice(self, start: usize, len: usize) -> Result<Var<'t>> {
        let a = self.value();
        if a.rank() != 1 || len == 0 || start + len > a.numel() {
            return Err(Error::shape("slice", format!("{start}..{} of {:?}", start + len, a.shape())));
        }
        let out = Tensor::vector(a.data()[start..start + len].to_vec());
        Ok(self.tape.record(out, Op::Slice(self.id, start), &[self.id]))
    }

    pub fn sum(self, axis: Option<usize>) -> Result<Var<'t>> {
        self.reduce("sum", axis, false)
    }

    pub fn mean(self, axis: Option<usize>) -> Result<Var<'t>> {
        self.reduce("mean", axis, true)
    }

    pub fn sum_all(self) -> Var<'t> {
        self.reduce("sum", None, false).expect("full reduction is always valid")
    }

    fn reduce(self, op: &'static str, axis: Option<usize>, mean: bool) -> Result<Var<'t>> {
        let a = self.value();
        let data = match axis {
            None => {
                let s: f64 = a.data().iter().sum();
                vec![if mean { s / a.numel() as f64 } else { s }]
            }
            Some(ax) => {
                check_axis(op, &a, ax)?;
                lanes(a.shape(), ax)
                    .iter()
                    .map(|lane| {
                        let s: f64 = lane.iter().map(|&i| a.data()[i]).sum();
                        if mean { s / lane.len() as f64 } else { s }
                    })
                    .collect()
            }
        };
        let out = Tensor::new(reduced_shape(a.shape(), axis), data)?;
        let node = if mean { Op::Mean(self.id, axis) } else { Op::Sum(self.id, axis) };
        Ok(self.tape.record(out, node, &[self.id]))
    }

    pub fn dot(self, other: Var<'t>) -> Result<Var<'t>> {
        Ok(self.mul(other)?.sum_all())
    }

    pub fn softmax(self, axis: usize) -> Result<Var<'t>> {
        let a = self.value();
        check_axis("softmax", &a, axis)?;
        let mut data = vec![0.0; a.numel()];
        for lane in lanes(a.shape(), axis) {
            let xs: Vec<f64> = lane.iter().map(|&i| a.data()[i]).collect();
            for (&i, y) in lane.iter().zip(softmax_lane(&xs)) {
                data[i] = y;
            }
        }
        let out = Tensor::new(a.shape().to_vec(), data)?;
        Ok(self.tape.record(out, Op::Softmax(self.id, axis), &[self.id]))
    }

    pub fn sigmoid(self) -> Var<'t> {
        self.unary(Op::Sigmoid(self.id), sigmoid)
    }

    pub fn tanh(self) -> Var<'t> {
        self.unary(Op::Tanh(self.id), f64::tanh)
    }

    pub fn relu(self) -> Var<'t> {
        self.unary(Op::Relu(self.id), |x| x.max(0.0))
    }

    pub fn leaky_relu(self, slope: f64) -> Var<'t> {
        self.unary(Op::LeakyRelu(self.id, slope), move |x| if x > 0.0 { x } else { slope * x })
    }

    pub fn exp(self) -> Var<'t> {
        self.unary(Op::Exp(self.id), f64::exp)
    }

    pub fn log(self) -> Var<'t> {
        self.unary(Op::Log(self.id), f64::ln)
    }

    /// `logsumexp(logits) - logits[target]` over a logit vector.
    pub fn cross_entropy(self, target: usize) -> Result<Var<'t>> {
        let a = self.value();
        if a.rank() != 1 || target >= a.numel() {
            return Err(Error::shape(
                "cross_entropy",
                format!("target {target} for logits {:?}", a.shape()),
            ));
        }
        let max = a.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + a.data().iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        let out = Tensor::scalar(lse - a.data()[target]);
        Ok(self.tape.record(out, Op::CrossEntropy(self.id, target), &[self.id]))
    }

    /// Summed sigmoid binary cross-entropy of logits against 0/1 labels.
    pub fn binary_cross_entropy(self, labels: &[f64]) -> Result<Var<'t>> {
        let a = self.value();
        if a.numel() != labels.len() {
            return Err(Error::shape(
                "binary_cross_entropy",
                format!("{} logits vs {} labels", a.numel(), labels.len()),
            ));
        }
        let loss: f64 = a
            .data()
            .iter()
            .zip(labels)
            .map(|(z, y)| z.max(0.0) - z * y + (-z.abs()).exp().ln_1p())
            .sum();
        let out = Tensor::scalar(loss);
        Ok(self.tape.record(out, Op::BinaryCrossEntropy(self.id, labels.to_vec()), &[self.id]))
    }

    /// `Σ (a - b)²`.
    pub fn l2_loss(self, other: Var<'t>) -> Result<Var<'t>> {
        let (a, b) = (self.value(), other.value());
        same_shape("l2_loss", &a, &b)?;
        let s: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum();
        Ok(self.tape.record(Tensor::scalar(s), Op::L2Loss(self.id, other.id), &[self.id, other.id]))
    }

    /// Per-row layer normalization with learned gain and bias.
    pub fn layer_norm(self, gain: Var<'t>, bias: Var<'t>, eps: f64) -> Result<Var<'t>> {
        let (a, ga, be) = (self.value(), gain.value(), bias.value());
        if a.rank() == 0 || ga.shape() != [a.cols()] || be.shape() != [a.cols()] {
            return Err(Error::shape(
                "layer_norm",
                format!("input {:?}, gain {:?}, bias {:?}", a.shape(), ga.shape(), be.shape()),
            ));
        }
        let mut data = Vec::with_capacity(a.numel());
        for r in 0..a.rows() {
            let (xhat, _) = normalize(a.row(r), eps);
            data.extend(
                xhat.iter()
                    .zip(ga.data().iter().zip(be.data()))
                    .map(|(x, (g, b))| x * g + b),
            );
        }
        let out = Tensor::new(a.shape().to_vec(), data)?;
        let op = Op::LayerNorm { x: self.id, gain: gain.id, bias: bias.id, eps };
        Ok(self.tape.record(out, op, &[self.id, gain.id, bias.id]))
    }
}

/// Concatenates along `axis`. Vectors and scalars join end to end on axis
/// 0; matrices join by rows (axis 0) or columns (axis 1).
pub fn concat<'t>(parts: &[Var<'t>], axis: usize) -> Result<Var<'t>> {
    let first = parts
        .first()
        .ok_or_else(|| Error::shape("concat", "no inputs"))?;
    let tape = first.tape;
    let vals: Vec<Rc<Tensor>> = parts.iter().map(|v| v.value()).collect();
    let ids: Vec<usize> = parts.iter().map(|v| v.id).collect();
    let shapes = || vals.iter().map(|v| v.shape().to_vec()).collect::<Vec<_>>();
    let out = if vals.iter().all(|v| v.rank() <= 1) {
        if axis != 0 {
            return Err(Error::shape("concat", format!("axis {axis} for vectors")));
        }
        Tensor::vector(vals.iter().flat_map(|v| v.data().iter().copied()).collect())
    } else if vals.iter().all(|v| v.rank() == 2) {
        match axis {
            0 => {
                let c = vals[0].cols();
                if vals.iter().any(|v| v.cols() != c) {
                    return Err(Error::shape("concat", format!("column mismatch {:?}", shapes())));
                }
                let rows = vals.iter().map(|v| v.rows()).sum();
                Tensor::new(vec![rows, c], vals.iter().flat_map(|v| v.data().iter().copied()).collect())?
            }
            1 => {
                let r = vals[0].rows();
                if vals.iter().any(|v| v.rows() != r) {
                    return Err(Error::shape("concat", format!("row mismatch {:?}", shapes())));
                }
                let cols: usize = vals.iter().map(|v| v.cols()).sum();
                let mut data = Vec::with_capacity(r * cols);
                for i in 0..r {
                    for v in &vals {
                        data.extend_from_slice(v.row(i));
                    }
                }
                Tensor::new(vec![r, cols], data)?
            }
            _ => return Err(Error::shape("concat", format!("axis {axis} for matrices"))),
        }
    } else {
        return Err(Error::shape("concat", format!("mixed ranks {:?}", shapes())));
    };
    Ok(tape.record(out, Op::Concat(ids.clone(), axis), &ids))
}

/// Stacks equal-length vectors as the rows of a matrix.
pub fn stack<'t>(rows: &[Var<'t>]) -> Result<Var<'t>> {
    let first = rows
        .first()
        .ok_or_else(|| Error::shape("stack", "no inputs"))?;
    let vals: Vec<Rc<Tensor>> = rows.iter().map(|v| v.value()).collect();
    let d = vals[0].numel();
    if vals.iter().any(|v| v.rank() != 1 || v.numel() != d) {
        let shapes: Vec<_> = vals.iter().map(|v| v.shape().to_vec()).collect();
        return Err(Error::shape("stack", format!("rows must be equal-length vectors, got {shapes:?}")));
    }
    let data = vals.iter().flat_map(|v| v.data().iter().copied()).collect();
    let out = Tensor::new(vec![rows.len(), d], data)?;
    let ids: Vec<usize> = rows.iter().map(|v| v.id).collect();
    Ok(first.tape.record(out, Op::Stack(ids.clone()), &ids))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn softmax_symmetric() {
        let t = Tape::new();
        let y = t.vector(&[0.0, 0.0]).softmax(0).unwrap();
        assert_eq!(y.data(), [0.5, 0.5]);
    }

    #[test]
    fn leaky_relu_default_slope() {
        let t = Tape::new();
        let y = t.vector(&[-1.0, 2.0]).leaky_relu(DEFAULT_LEAKY_SLOPE);
        assert_eq!(y.data(), [-0.2, 2.0]);
    }

    #[test]
    fn uniform_cross_entropy_is_log_three() {
        let t = Tape::new();
        let l = t.vector(&[0.0, 0.0, 0.0]).cross_entropy(1).unwrap();
        assert!((l.item() - 3f64.ln()).abs() < 1e-12);
        assert!((l.item() - 1.0986).abs() < 1e-4);
    }

    #[test]
    fn sum_gradient_is_ones() {
        let t = Tape::new();
        let w = t.param(Tensor::vector(vec![0.3, -2.0, 5.0]));
        let loss = w.sum_all();
        let g = t.backward(loss).unwrap();
        assert_eq!(g.get(w).unwrap().data(), [1.0, 1.0, 1.0]);
    }

    #[test]
    fn l2_gradient_analytic() {
        let t = Tape::new();
        let w = t.param(Tensor::vector(vec![1.0, 2.0]));
        let zero = t.vector(&[0.0, 0.0]);
        let loss = w.l2_loss(zero).unwrap();
        assert_eq!(loss.item(), 5.0);
        let g = t.backward(loss).unwrap();
        assert_eq!(g.get(w).unwrap().data(), [2.0, 4.0]);
    }

    #[test]
    fn non_scalar_backward_is_contract_error() {
        let t = Tape::new();
        let w = t.param(Tensor::vector(vec![1.0, 2.0]));
        assert!(matches!(t.backward(w), Err(Error::Contract(_))));
    }

    #[test]
    fn reused_tensor_accumulates() {
        let t = Tape::new();
        let w = t.param(Tensor::vector(vec![3.0]));
        let loss = w.mul(w).unwrap().sum_all();
        let g = t.backward(loss).unwrap();
        assert_eq!(g.get(w).unwrap().data(), [6.0]);
    }

    #[test]
    fn matmul_shapes() {
        let t = Tape::new();
        let a = t.constant(Tensor::matrix(2, 3, vec![1., 2., 3., 4., 5., 6.]).unwrap());
        let v = t.vector(&[1.0, 0.0, -1.0]);
        assert_eq!(a.matmul(v).unwrap().data(), [-2.0, -2.0]);
        let u = t.vector(&[1.0, 1.0]);
        assert_eq!(u.matmul(a).unwrap().data(), [5.0, 7.0, 9.0]);
        let err = v.matmul(v).unwrap_err();
        assert!(err.to_string().contains("matmul"));
        let at = a.transpose().unwrap();
        assert_eq!(a.matmul(at).unwrap().shape(), [2, 2]);
    }

    #[test]
    fn shape_errors_name_operation() {
        let t = Tape::new();
        let a = t.vector(&[1.0, 2.0]);
        let b = t.vector(&[1.0, 2.0, 3.0]);
        for (res, name) in [(a.add(b), "add"), (a.sub(b), "subtract"), (a.mul(b), "multiply"), (a.l2_loss(b), "l2_loss")] {
            let msg = res.unwrap_err().to_string();
            assert!(msg.contains(name) && msg.contains("[2]") && msg.contains("[3]"), "{msg}");
        }
    }

    #[test]
    fn row_bias_broadcast() {
        let t = Tape::new();
        let m = t.constant(Tensor::matrix(2, 2, vec![1., 2., 3., 4.]).unwrap());
        let b = t.param(Tensor::vector(vec![10.0, 20.0]));
        let y = m.add(b).unwrap();
        assert_eq!(y.data(), [11., 22., 13., 24.]);
        let g = t.backward(y.sum_all()).unwrap();
        assert_eq!(g.get(b).unwrap().data(), [2.0, 2.0]);
    }

    #[test]
    fn reductions_along_axes() {
        let t = Tape::new();
        let m = t.constant(Tensor::matrix(2, 3, vec![1., 2., 3., 4., 5., 6.]).unwrap());
        assert_eq!(m.sum(Some(0)).unwrap().data(), [5., 7., 9.]);
        assert_eq!(m.mean(Some(1)).unwrap().data(), [2., 5.]);
        assert_eq!(m.mean(None).unwrap().data(), [3.5]);
        assert!(m.sum(Some(2)).is_err());
        let s = m.softmax(1).unwrap();
        let rows = s.sum(Some(1)).unwrap().data();
        close(&rows, &[1.0, 1.0], 1e-12);
    }

    #[test]
    fn concat_and_stack() {
        let t = Tape::new();
        let a = t.vector(&[1.0, 2.0]);
        let b = t.scalar(3.0);
        assert_eq!(concat(&[a, b], 0).unwrap().data(), [1., 2., 3.]);
        let m = stack(&[a, a]).unwrap();
        assert_eq!(m.shape(), [2, 2]);
        let wide = concat(&[m, m], 1).unwrap();
        assert_eq!(wide.shape(), [2, 4]);
        assert_eq!(wide.data(), [1., 2., 1., 2., 1., 2., 1., 2.]);
        assert!(stack(&[a, b]).is_err());
    }

    #[test]
    fn constant_only_ops_are_not_recorded_for_grad() {
        let t = Tape::new();
        let y = t.vector(&[1.0]).exp();
        assert!(!y.requires_grad());
        let w = t.param(Tensor::vector(vec![1.0]));
        assert!(w.exp().requires_grad());
    }

    #[test]
    fn bce_matches_direct_formula() {
        let t = Tape::new();
        let z = t.vector(&[2.0, -1.0]);
        let l = z.binary_cross_entropy(&[1.0, 0.0]).unwrap();
        let s = |x: f64| 1.0 / (1.0 + (-x).exp());
        let expect = -(s(2.0).ln()) - (1.0 - s(-1.0)).ln();
        assert!((l.item() - expect).abs() < 1e-12);
    }

    #[test]
    fn layer_norm_zero_mean_unit_var() {
        let t = Tape::new();
        let x = t.constant(Tensor::matrix(2, 4, vec![1., 2., 3., 4., -1., 0., 5., 2.]).unwrap());
        let g = t.vector(&[1.0; 4]);
        let b = t.vector(&[0.0; 4]);
        let y = x.layer_norm(g, b, 1e-12).unwrap().value();
        for r in 0..2 {
            let row = y.row(r);
            let mean: f64 = row.iter().sum::<f64>() / 4.0;
            let var: f64 = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
            assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-9);
        }
    }
}
