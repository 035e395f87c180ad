//! Define-then-run computation graph with reverse-mode differentiation.
//!
//! Nodes are appended in construction order, which is also a topological
//! order: every operand of a node was created before it. A graph is built
//! once, then evaluated any number of times with different [`Bindings`].
//! Shapes are checked at evaluation time, so one graph serves any batch size.
//!
//! All operands are viewed as matrices (see [`DenseArray::dims2`]).

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::params::ParamSet;
use crate::rng;
use crate::tensor::{gemm, DenseArray};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

/// Evaluation mode. Dropout masks are drawn only in training mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Inference,
    Train { seed: u64 },
}

#[derive(Debug, Clone)]
enum Op {
    Input(String),
    Param(String),
    MatMul(NodeId, NodeId),
    AddBias(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Affine { x: NodeId, scale: f64, offset: f64 },
    Sigmoid(NodeId),
    Tanh(NodeId),
    LeakyRelu(NodeId, f64),
    Softplus(NodeId),
    ConcatCols(Vec<NodeId>),
    SliceCols { x: NodeId, start: usize, len: usize },
    Reshape(NodeId, Vec<usize>),
    Dropout(NodeId, f64),
    SoftmaxRows(NodeId),
    ScaleRows(NodeId, NodeId),
    Sum(NodeId),
    Mean(NodeId),
}

/// Borrowed name → array map used to feed inputs and parameters.
#[derive(Debug, Default, Clone)]
pub struct Bindings<'a> {
    entries: Vec<(&'a str, &'a DenseArray)>,
}

impl<'a> Bindings<'a> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bind(&mut self, name: &'a str, value: &'a DenseArray) -> &mut Self {
        self.entries.push((name, value));
        self
    }

    pub fn bind_params(&mut self, params: &'a ParamSet) -> &mut Self {
        for (n, v) in params.iter() {
            self.entries.push((n, v));
        }
        self
    }

    pub fn get(&self, name: &str) -> Option<&'a DenseArray> {
        self.entries
            .iter()
            .rev()
            .find(|(n, _)| *n == name)
            .map(|(_, v)| *v)
    }
}

/// Parameter gradients in parameter-node creation order.
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    entries: Vec<(String, DenseArray)>,
}

impl Gradients {
    pub fn get(&self, name: &str) -> Option<&DenseArray> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, g)| g)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &DenseArray)> {
        self.entries.iter().map(|(n, g)| (n.as_str(), g))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Default)]
pub struct Graph {
    ops: Vec<Op>,
    values: Vec<Option<DenseArray>>,
    masks: Vec<Option<Vec<f64>>>,
    grads: Vec<Option<DenseArray>>,
    outputs: Vec<(String, NodeId)>,
}

fn shape_err(node: usize, detail: impl Into<String>) -> Error {
    Error::Shape {
        node: Some(node),
        detail: detail.into(),
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + libm::log1p(libm::exp(-x.abs()))
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    fn push(&mut self, op: Op) -> NodeId {
        self.ops.push(op);
        self.values.push(None);
        self.masks.push(None);
        self.grads.push(None);
        NodeId(self.ops.len() - 1)
    }

    fn find_leaf(&self, name: &str, param: bool) -> Option<NodeId> {
        self.ops.iter().position(|op| match op {
            Op::Input(n) => !param && n == name,
            Op::Param(n) => param && n == name,
            _ => false,
        })
        .map(NodeId)
    }

    /// Data input bound by name at evaluation time. Repeated calls with the
    /// same name return the same node.
    pub fn input(&mut self, name: &str) -> NodeId {
        self.find_leaf(name, false)
            .unwrap_or_else(|| self.push(Op::Input(name.to_string())))
    }

    /// Trainable parameter bound by name. Repeated calls share one node, so
    /// gradients from every use accumulate into it.
    pub fn param(&mut self, name: &str) -> NodeId {
        self.find_leaf(name, true)
            .unwrap_or_else(|| self.push(Op::Param(name.to_string())))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::MatMul(a, b))
    }

    /// Adds a `1×m` bias row to every row of `a`.
    pub fn add_bias(&mut self, a: NodeId, bias: NodeId) -> NodeId {
        self.push(Op::AddBias(a, bias))
    }

    /// `x·w + b`.
    pub fn affine(&mut self, x: NodeId, w: NodeId, b: NodeId) -> NodeId {
        let xw = self.matmul(x, w);
        self.add_bias(xw, b)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Mul(a, b))
    }

    /// `scale·x + offset`, elementwise.
    pub fn scale_shift(&mut self, x: NodeId, scale: f64, offset: f64) -> NodeId {
        self.push(Op::Affine { x, scale, offset })
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Tanh(x))
    }

    pub fn leaky_relu(&mut self, x: NodeId, slope: f64) -> NodeId {
        self.push(Op::LeakyRelu(x, slope))
    }

    /// `ln(1 + e^x)`.
    pub fn softplus(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Softplus(x))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        self.push(Op::ConcatCols(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, len: usize) -> NodeId {
        self.push(Op::SliceCols { x, start, len })
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> NodeId {
        self.push(Op::Reshape(x, shape.to_vec()))
    }

    /// Inverted dropout with drop probability `p`; identity at inference.
    pub fn dropout(&mut self, x: NodeId, p: f64) -> NodeId {
        self.push(Op::Dropout(x, p))
    }

    pub fn softmax_rows(&mut self, x: NodeId) -> NodeId {
        self.push(Op::SoftmaxRows(x))
    }

    /// Multiplies row `i` of `x` by `col[i]` (`col` is `n×1`).
    pub fn scale_rows(&mut self, x: NodeId, col: NodeId) -> NodeId {
        self.push(Op::ScaleRows(x, col))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Sum(x))
    }

    pub fn mean(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Mean(x))
    }

    /// Names a node so that [`Graph::evaluate`] returns its value.
    pub fn mark_output(&mut self, name: &str, node: NodeId) {
        self.outputs.push((name.to_string(), node));
    }

    pub fn value(&self, node: NodeId) -> Option<&DenseArray> {
        self.values.get(node.0).and_then(|v| v.as_ref())
    }

    /// Gradient of the last backward pass with respect to `node`.
    pub fn grad(&self, node: NodeId) -> Option<&DenseArray> {
        self.grads.get(node.0).and_then(|g| g.as_ref())
    }

    /// Names of all parameter nodes in creation order.
    pub fn param_names(&self) -> Vec<&str> {
        self.ops
            .iter()
            .filter_map(|op| match op {
                Op::Param(n) => Some(n.as_str()),
                _ => None,
            })
            .collect()
    }

    /// Runs the forward pass and returns the values of the marked outputs.
    pub fn evaluate(
        &mut self,
        bindings: &Bindings<'_>,
        mode: Mode,
    ) -> Result<BTreeMap<String, DenseArray>> {
        self.forward(bindings, mode)?;
        let mut out = BTreeMap::new();
        for (name, id) in &self.outputs {
            out.insert(name.clone(), self.values[id.0].clone().expect("evaluated"));
        }
        Ok(out)
    }

    /// Runs the forward pass, storing every node value.
    pub fn forward(&mut self, bindings: &Bindings<'_>, mode: Mode) -> Result<()> {
        for g in self.grads.iter_mut() {
            *g = None;
        }
        for i in 0..self.ops.len() {
            let value = self.eval_node(i, bindings, mode)?;
            self.values[i] = Some(value);
        }
        Ok(())
    }

    fn val(&self, id: NodeId) -> &DenseArray {
        self.values[id.0].as_ref().expect("operand evaluated before use")
    }

    fn eval_node(&mut self, i: usize, bindings: &Bindings<'_>, mode: Mode) -> Result<DenseArray> {
        let op = &self.ops[i];
        let out = match op {
            Op::Input(name) | Op::Param(name) => {
                let v = bindings
                    .get(name)
                    .ok_or_else(|| Error::invalid(alloc::format!("no binding for `{name}` (node {i})")))?;
                if !v.all_finite() {
                    return Err(Error::NonFinite {
                        context: alloc::format!("binding `{name}` (node {i})"),
                    });
                }
                v.clone()
            }
            Op::MatMul(a, b) => {
                let (a, b) = (self.val(*a), self.val(*b));
                let (n, k) = a.dims2();
                let (k2, m) = b.dims2();
                if k != k2 {
                    return Err(shape_err(i, alloc::format!("matmul {n}x{k} by {k2}x{m}")));
                }
                let mut out = DenseArray::zeros(&[n, m]);
                gemm(n, k, m, a.as_slice(), false, b.as_slice(), false, out.as_mut_slice(), 0.0);
                out
            }
            Op::AddBias(a, b) => {
                let (a, b) = (self.val(*a), self.val(*b));
                let (n, m) = a.dims2();
                if b.len() != m {
                    return Err(shape_err(i, alloc::format!("bias of {} values for {m} columns", b.len())));
                }
                let mut out = a.clone();
                let bias = b.as_slice();
                for r in 0..n {
                    for (o, bv) in out.as_mut_slice()[r * m..(r + 1) * m].iter_mut().zip(bias) {
                        *o += bv;
                    }
                }
                out
            }
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => {
                let (x, y) = (self.val(*a), self.val(*b));
                if x.dims2() != y.dims2() {
                    return Err(shape_err(
                        i,
                        alloc::format!("elementwise {:?} vs {:?}", x.shape(), y.shape()),
                    ));
                }
                let mut out = x.clone();
                let ys = y.as_slice();
                let os = out.as_mut_slice();
                match op {
                    Op::Add(..) => os.iter_mut().zip(ys).for_each(|(o, v)| *o += v),
                    Op::Sub(..) => os.iter_mut().zip(ys).for_each(|(o, v)| *o -= v),
                    _ => os.iter_mut().zip(ys).for_each(|(o, v)| *o *= v),
                }
                out
            }
            Op::Affine { x, scale, offset } => {
                let (s, o) = (*scale, *offset);
                self.val(*x).map(|v| s * v + o)
            }
            Op::Sigmoid(x) => self.val(*x).map(sigmoid),
            Op::Tanh(x) => self.val(*x).map(libm::tanh),
            Op::LeakyRelu(x, slope) => {
                let s = *slope;
                self.val(*x).map(|v| if v > 0.0 { v } else { s * v })
            }
            Op::Softplus(x) => self.val(*x).map(softplus),
            Op::ConcatCols(parts) => {
                if parts.is_empty() {
                    return Err(shape_err(i, "empty concatenation"));
                }
                let n = self.val(parts[0]).rows();
                let mut widths = Vec::with_capacity(parts.len());
                for p in parts {
                    let (r, c) = self.val(*p).dims2();
                    if r != n {
                        return Err(shape_err(i, alloc::format!("concat rows {r} vs {n}")));
                    }
                    widths.push(c);
                }
                let total: usize = widths.iter().sum();
                let mut data = Vec::with_capacity(n * total);
                for r in 0..n {
                    for p in parts {
                        data.extend_from_slice(self.val(*p).row_slice(r));
                    }
                }
                DenseArray::matrix(n, total, data)?
            }
            Op::SliceCols { x, start, len } => {
                let x = self.val(*x);
                let (n, m) = x.dims2();
                if *len == 0 || start + len > m {
                    return Err(shape_err(i, alloc::format!("slice {start}+{len} of {m} columns")));
                }
                let mut data = Vec::with_capacity(n * len);
                for r in 0..n {
                    data.extend_from_slice(&x.row_slice(r)[*start..start + len]);
                }
                DenseArray::matrix(n, *len, data)?
            }
            Op::Reshape(x, shape) => self
                .val(*x)
                .reshaped(shape)
                .map_err(|e| shape_err(i, alloc::format!("{e}")))?,
            Op::Dropout(x, p) => {
                let p = *p;
                if !(0.0..1.0).contains(&p) {
                    return Err(Error::invalid(alloc::format!("dropout rate {p} at node {i}")));
                }
                let x = self.val(*x).clone();
                match mode {
                    Mode::Train { seed } if p > 0.0 => {
                        let mut r = rng::seeded(rng::derive_seed(seed, i as u64));
                        let keep = 1.0 / (1.0 - p);
                        let mask: Vec<f64> = (0..x.len())
                            .map(|_| if r.random::<f64>() >= p { keep } else { 0.0 })
                            .collect();
                        let mut out = x;
                        out.as_mut_slice().iter_mut().zip(&mask).for_each(|(o, m)| *o *= m);
                        self.masks[i] = Some(mask);
                        out
                    }
                    _ => {
                        self.masks[i] = None;
                        x
                    }
                }
            }
            Op::SoftmaxRows(x) => {
                let mut out = self.val(*x).clone();
                let m = out.cols();
                for row in out.as_mut_slice().chunks_mut(m) {
                    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let mut total = 0.0;
                    for v in row.iter_mut() {
                        *v = libm::exp(*v - max);
                        total += *v;
                    }
                    row.iter_mut().for_each(|v| *v /= total);
                }
                out
            }
            Op::ScaleRows(x, c) => {
                let (x, c) = (self.val(*x), self.val(*c));
                let (n, m) = x.dims2();
                if c.len() != n {
                    return Err(shape_err(i, alloc::format!("row scale of {} for {n} rows", c.len())));
                }
                let mut out = x.clone();
                for (row, s) in out.as_mut_slice().chunks_mut(m).zip(c.as_slice()) {
                    row.iter_mut().for_each(|v| *v *= s);
                }
                out
            }
            Op::Sum(x) => DenseArray::scalar(self.val(*x).sum()),
            Op::Mean(x) => {
                let x = self.val(*x);
                DenseArray::scalar(x.sum() / x.len() as f64)
            }
        };
        Ok(out)
    }

    fn accumulate(&mut self, id: NodeId, delta: DenseArray) {
        match &mut self.grads[id.0] {
            Some(g) => g
                .as_mut_slice()
                .iter_mut()
                .zip(delta.as_slice())
                .for_each(|(a, b)| *a += b),
            slot @ None => *slot = Some(delta),
        }
    }

    /// Backpropagates from a one-element `loss` node. Returns the gradient
    /// of every parameter node; parameters the loss does not depend on get
    /// zero gradients.
    pub fn backward(&mut self, loss: NodeId) -> Result<Gradients> {
        let shape = self
            .value(loss)
            .ok_or_else(|| Error::invalid("backward before forward"))?
            .shape()
            .to_vec();
        if shape.iter().product::<usize>() != 1 {
            return Err(Error::invalid(alloc::format!(
                "loss node {} is not scalar (shape {shape:?})",
                loss.0
            )));
        }
        for g in self.grads.iter_mut() {
            *g = None;
        }
        self.grads[loss.0] = Some(DenseArray::filled(&shape, 1.0));
        for i in (0..=loss.0).rev() {
            let Some(g) = self.grads[i].take() else { continue };
            self.propagate(i, &g);
            self.grads[i] = Some(g);
        }
        let mut entries = Vec::new();
        for (i, op) in self.ops.iter().enumerate() {
            if let Op::Param(name) = op {
                let g = match &self.grads[i] {
                    Some(g) => g.clone(),
                    None => DenseArray::zeros(self.values[i].as_ref().expect("evaluated").shape()),
                };
                entries.push((name.clone(), g));
            }
        }
        Ok(Gradients { entries })
    }

    fn propagate(&mut self, i: usize, g: &DenseArray) {
        let op = self.ops[i].clone();
        match op {
            Op::Input(_) | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (n, k) = self.val(a).dims2();
                let m = self.val(b).cols();
                let mut da = DenseArray::zeros(self.val(a).shape());
                gemm(n, m, k, g.as_slice(), false, self.val(b).as_slice(), true, da.as_mut_slice(), 0.0);
                let mut db = DenseArray::zeros(self.val(b).shape());
                gemm(k, n, m, self.val(a).as_slice(), true, g.as_slice(), false, db.as_mut_slice(), 0.0);
                self.accumulate(a, da);
                self.accumulate(b, db);
            }
            Op::AddBias(a, b) => {
                let m = g.cols();
                let mut db = DenseArray::zeros(self.val(b).shape());
                for row in g.as_slice().chunks(m) {
                    db.as_mut_slice().iter_mut().zip(row).for_each(|(d, v)| *d += v);
                }
                self.accumulate(a, g.clone());
                self.accumulate(b, db);
            }
            Op::Add(a, b) => {
                self.accumulate(a, g.reshaped(self.val(a).shape()).expect("same size"));
                self.accumulate(b, g.reshaped(self.val(b).shape()).expect("same size"));
            }
            Op::Sub(a, b) => {
                self.accumulate(a, g.reshaped(self.val(a).shape()).expect("same size"));
                let neg = DenseArray::new(self.val(b).shape().to_vec(), g.as_slice().iter().map(|v| -v).collect())
                    .expect("same size");
                self.accumulate(b, neg);
            }
            Op::Mul(a, b) => {
                let zip = |x: &DenseArray, shape: &[usize]| {
                    let data = g.as_slice().iter().zip(x.as_slice()).map(|(u, v)| u * v).collect();
                    DenseArray::new(shape.to_vec(), data).expect("same size")
                };
                let da = zip(self.val(b), self.val(a).shape());
                let db = zip(self.val(a), self.val(b).shape());
                self.accumulate(a, da);
                self.accumulate(b, db);
            }
            Op::Affine { x, scale, .. } => {
                let d = g.map(|v| scale * v).reshaped(self.val(x).shape()).expect("same size");
                self.accumulate(x, d);
            }
            Op::Sigmoid(x) | Op::Tanh(x) => {
                let y = self.values[i].as_ref().expect("evaluated");
                let tanh = matches!(op, Op::Tanh(_));
                let data = g
                    .as_slice()
                    .iter()
                    .zip(y.as_slice())
                    .map(|(u, y)| if tanh { u * (1.0 - y * y) } else { u * y * (1.0 - y) })
                    .collect();
                let d = DenseArray::new(self.val(x).shape().to_vec(), data).expect("same size");
                self.accumulate(x, d);
            }
            Op::LeakyRelu(x, slope) => {
                let data = g
                    .as_slice()
                    .iter()
                    .zip(self.val(x).as_slice())
                    .map(|(u, v)| if *v > 0.0 { *u } else { slope * u })
                    .collect();
                let d = DenseArray::new(self.val(x).shape().to_vec(), data).expect("same size");
                self.accumulate(x, d);
            }
            Op::Softplus(x) => {
                let data = g
                    .as_slice()
                    .iter()
                    .zip(self.val(x).as_slice())
                    .map(|(u, v)| u * sigmoid(*v))
                    .collect();
                let d = DenseArray::new(self.val(x).shape().to_vec(), data).expect("same size");
                self.accumulate(x, d);
            }
            Op::ConcatCols(parts) => {
                let (n, total) = g.dims2();
                let mut offset = 0;
                for p in parts {
                    let (pr, pc) = self.val(p).dims2();
                    debug_assert_eq!(pr, n);
                    let mut data = Vec::with_capacity(n * pc);
                    for r in 0..n {
                        data.extend_from_slice(&g.as_slice()[r * total + offset..r * total + offset + pc]);
                    }
                    let d = DenseArray::new(self.val(p).shape().to_vec(), data).expect("same size");
                    self.accumulate(p, d);
                    offset += pc;
                }
            }
            Op::SliceCols { x, start, len } => {
                let (n, m) = self.val(x).dims2();
                let mut d = DenseArray::zeros(self.val(x).shape());
                for r in 0..n {
                    d.as_mut_slice()[r * m + start..r * m + start + len]
                        .copy_from_slice(&g.as_slice()[r * len..(r + 1) * len]);
                }
                self.accumulate(x, d);
            }
            Op::Reshape(x, _) => {
                let d = g.reshaped(self.val(x).shape()).expect("same size");
                self.accumulate(x, d);
            }
            Op::Dropout(x, _) => {
                let d = match &self.masks[i] {
                    Some(mask) => DenseArray::new(
                        self.val(x).shape().to_vec(),
                        g.as_slice().iter().zip(mask).map(|(u, m)| u * m).collect(),
                    )
                    .expect("same size"),
                    None => g.reshaped(self.val(x).shape()).expect("same size"),
                };
                self.accumulate(x, d);
            }
            Op::SoftmaxRows(x) => {
                let y = self.values[i].as_ref().expect("evaluated");
                let m = y.cols();
                let mut data = vec![0.0; y.len()];
                for ((drow, yrow), grow) in data
                    .chunks_mut(m)
                    .zip(y.as_slice().chunks(m))
                    .zip(g.as_slice().chunks(m))
                {
                    let dot: f64 = yrow.iter().zip(grow).map(|(a, b)| a * b).sum();
                    for ((d, yv), gv) in drow.iter_mut().zip(yrow).zip(grow) {
                        *d = yv * (gv - dot);
                    }
                }
                let d = DenseArray::new(self.val(x).shape().to_vec(), data).expect("same size");
                self.accumulate(x, d);
            }
            Op::ScaleRows(x, c) => {
                let m = self.val(x).cols();
                let xs = self.val(x).as_slice();
                let cs = self.val(c).as_slice();
                let mut dx = vec![0.0; xs.len()];
                let mut dc = vec![0.0; cs.len()];
                for (r, s) in cs.iter().enumerate() {
                    for j in 0..m {
                        let gv = g.as_slice()[r * m + j];
                        dx[r * m + j] = gv * s;
                        dc[r] += gv * xs[r * m + j];
                    }
                }
                let dx = DenseArray::new(self.val(x).shape().to_vec(), dx).expect("same size");
                let dc = DenseArray::new(self.val(c).shape().to_vec(), dc).expect("same size");
                self.accumulate(x, dx);
                self.accumulate(c, dc);
            }
            Op::Sum(x) | Op::Mean(x) => {
                let xv = self.val(x);
                let scale = if matches!(op, Op::Mean(_)) { 1.0 / xv.len() as f64 } else { 1.0 };
                let d = DenseArray::filled(xv.shape(), g.as_slice()[0] * scale);
                self.accumulate(x, d);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval1(build: impl Fn(&mut Graph, NodeId) -> NodeId, x: DenseArray) -> DenseArray {
        let mut g = Graph::new();
        let xi = g.input("x");
        let out = build(&mut g, xi);
        g.mark_output("y", out);
        let mut b = Bindings::new();
        b.bind("x", &x);
        g.evaluate(&b, Mode::Inference).unwrap().remove("y").unwrap()
    }

    #[test]
    fn primitive_values() {
        assert_eq!(eval1(|g, x| g.sigmoid(x), DenseArray::scalar(0.0)).item(), Some(0.5));
        assert_eq!(eval1(|g, x| g.tanh(x), DenseArray::scalar(0.0)).item(), Some(0.0));
        let s = eval1(|g, x| g.softmax_rows(x), DenseArray::row(vec![0.0, 0.0]));
        assert_eq!(s.as_slice(), &[0.5, 0.5]);
    }

    #[test]
    fn affine_identity() {
        let mut g = Graph::new();
        let x = g.input("x");
        let w = g.param("w");
        let b = g.param("b");
        let y = g.affine(x, w, b);
        g.mark_output("y", y);
        let xv = DenseArray::row(vec![1.0, 2.0]);
        let wv = DenseArray::identity(2);
        let bv = DenseArray::row(vec![0.0, 0.0]);
        let mut bind = Bindings::new();
        bind.bind("x", &xv).bind("w", &wv).bind("b", &bv);
        let out = g.evaluate(&bind, Mode::Inference).unwrap();
        assert_eq!(out["y"].as_slice(), &[1.0, 2.0]);
    }

    #[test]
    fn square_derivative() {
        let mut g = Graph::new();
        let x = g.param("x");
        let y = g.mul(x, x);
        let xv = DenseArray::scalar(3.0);
        let mut b = Bindings::new();
        b.bind("x", &xv);
        g.forward(&b, Mode::Inference).unwrap();
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.get("x").unwrap().item(), Some(6.0));
    }

    #[test]
    fn sigmoid_derivative_at_zero() {
        let mut g = Graph::new();
        let x = g.param("x");
        let y = g.sigmoid(x);
        let xv = DenseArray::scalar(0.0);
        let mut b = Bindings::new();
        b.bind("x", &xv);
        g.forward(&b, Mode::Inference).unwrap();
        assert_eq!(g.backward(y).unwrap().get("x").unwrap().item(), Some(0.25));
    }

    #[test]
    fn shape_mismatch_names_node() {
        let mut g = Graph::new();
        let a = g.input("a");
        let b = g.input("b");
        let c = g.matmul(a, b);
        let av = DenseArray::zeros(&[2, 3]);
        let bv = DenseArray::zeros(&[2, 3]);
        let mut bind = Bindings::new();
        bind.bind("a", &av).bind("b", &bv);
        match g.forward(&bind, Mode::Inference) {
            Err(Error::Shape { node: Some(n), .. }) => assert_eq!(n, c.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_finite_binding_rejected() {
        let mut g = Graph::new();
        let x = g.input("x");
        g.tanh(x);
        let xv = DenseArray::row(vec![1.0, f64::NAN]);
        let mut b = Bindings::new();
        b.bind("x", &xv);
        assert!(matches!(g.forward(&b, Mode::Inference), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut g = Graph::new();
        let x = g.param("x");
        let y = g.tanh(x);
        let xv = DenseArray::row(vec![1.0, 2.0]);
        let mut b = Bindings::new();
        b.bind("x", &xv);
        g.forward(&b, Mode::Inference).unwrap();
        assert!(g.backward(y).is_err());
    }

    #[test]
    fn unused_param_gets_zero_gradient() {
        let mut g = Graph::new();
        let x = g.param("x");
        let _unused = g.param("w");
        let y = g.sum(x);
        let xv = DenseArray::row(vec![1.0, 2.0]);
        let wv = DenseArray::zeros(&[3, 3]);
        let mut b = Bindings::new();
        b.bind("x", &xv).bind("w", &wv);
        g.forward(&b, Mode::Inference).unwrap();
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.get("w").unwrap().shape(), &[3, 3]);
        assert_eq!(grads.get("w").unwrap().sum(), 0.0);
    }

    #[test]
    fn dropout_is_identity_at_inference_and_seeded_in_training() {
        let x = DenseArray::filled(&[4, 50], 1.0);
        let mut g = Graph::new();
        let xi = g.input("x");
        let d = g.dropout(xi, 0.25);
        g.mark_output("d", d);
        let mut b = Bindings::new();
        b.bind("x", &x);
        let inf = g.evaluate(&b, Mode::Inference).unwrap();
        assert_eq!(inf["d"], x);
        let t1 = g.evaluate(&b, Mode::Train { seed: 9 }).unwrap();
        let t2 = g.evaluate(&b, Mode::Train { seed: 9 }).unwrap();
        assert_eq!(t1["d"], t2["d"]);
        let keep = 1.0 / 0.75;
        assert!(t1["d"].as_slice().iter().all(|&v| v == 0.0 || (v - keep).abs() < 1e-15));
        let dropped = t1["d"].as_slice().iter().filter(|&&v| v == 0.0).count();
        assert!(dropped > 20 && dropped < 80, "dropped {dropped}");
    }
}
