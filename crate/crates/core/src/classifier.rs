//! BiGRU-attention sequence classifier and its GRU / LSTM baselines.
//!
//! Inputs are flattened windows: row `i` of the batch holds `q` time steps of
//! `m` features each, time-major. All layers use the row-vector convention
//! `x·W + b`.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::datagen::{LabeledDataset, Stability};
use crate::error::{Error, Result};
use crate::graph::{Bindings, Graph, Mode, NodeId};
use crate::loss::mse_loss_node;
use crate::optim::{adam_step, AdamConfig, AdamState};
use crate::params::{glorot, ParamSet};
use crate::rng;
use crate::tensor::DenseArray;

pub const HIDDEN: usize = 64;
pub const ATTENTION_SIZE: usize = 8;
pub const DROPOUT: f64 = 0.25;
const CLASSES: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Variant {
    BigruAttention,
    Gru,
    Lstm,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::BigruAttention => "bigru-attention",
            Variant::Gru => "gru",
            Variant::Lstm => "lstm",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "bigru-attention" => Some(Variant::BigruAttention),
            "gru" => Some(Variant::Gru),
            "lstm" => Some(Variant::Lstm),
            _ => None,
        }
    }
}

/// Weights of one GRU cell: `W_*` is `m × H`, `U_*` is `H × H`, `b_*` is `1 × H`.
#[derive(Debug, Clone, PartialEq)]
pub struct GruCellParams {
    pub w_r: DenseArray,
    pub u_r: DenseArray,
    pub b_r: DenseArray,
    pub w_z: DenseArray,
    pub u_z: DenseArray,
    pub b_z: DenseArray,
    pub w_h: DenseArray,
    pub u_h: DenseArray,
    pub b_h: DenseArray,
}

const GRU_NAMES: [&str; 9] = ["w_r", "u_r", "b_r", "w_z", "u_z", "b_z", "w_h", "u_h", "b_h"];
const LSTM_GATES: [&str; 4] = ["i", "f", "o", "c"];

impl GruCellParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        let w = || DenseArray::zeros(&[input, hidden]);
        let u = || DenseArray::zeros(&[hidden, hidden]);
        let b = || DenseArray::zeros(&[1, hidden]);
        Self {
            w_r: w(),
            u_r: u(),
            b_r: b(),
            w_z: w(),
            u_z: u(),
            b_z: b(),
            w_h: w(),
            u_h: u(),
            b_h: b(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_r.rows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.u_r.rows()
    }

    fn arrays(&self) -> [&DenseArray; 9] {
        [
            &self.w_r, &self.u_r, &self.b_r, &self.w_z, &self.u_z, &self.b_z, &self.w_h, &self.u_h, &self.b_h,
        ]
    }

    /// Reads the cell stored under `prefix.` in a parameter set.
    pub fn from_params(params: &ParamSet, prefix: &str) -> Result<Self> {
        let get = |n: &str| params.require(&alloc::format!("{prefix}.{n}")).cloned();
        Ok(Self {
            w_r: get("w_r")?,
            u_r: get("u_r")?,
            b_r: get("b_r")?,
            w_z: get("w_z")?,
            u_z: get("u_z")?,
            b_z: get("b_z")?,
            w_h: get("w_h")?,
            u_h: get("u_h")?,
            b_h: get("b_h")?,
        })
    }

    pub fn insert_into(&self, params: &mut ParamSet, prefix: &str) {
        for (n, a) in GRU_NAMES.iter().zip(self.arrays()) {
            params.insert(alloc::format!("{prefix}.{n}"), a.clone());
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-x))
}

/// `x·W + h·U + b` for row vectors.
fn gate(x: &[f64], w: &DenseArray, h: &[f64], u: &DenseArray, b: &DenseArray) -> Vec<f64> {
    let hd = b.cols();
    let mut out = b.as_slice().to_vec();
    for (i, xi) in x.iter().enumerate() {
        out.iter_mut().zip(w.row_slice(i)).for_each(|(o, wv)| *o += xi * wv);
    }
    for (i, hi) in h.iter().enumerate() {
        out.iter_mut().zip(u.row_slice(i)).for_each(|(o, uv)| *o += hi * uv);
    }
    debug_assert_eq!(out.len(), hd);
    out
}

/// One GRU step on plain vectors.
pub fn gru_cell(x_t: &[f64], h_prev: &[f64], p: &GruCellParams) -> Result<Vec<f64>> {
    let (m, h) = (p.input_dim(), p.hidden_dim());
    let shapes_ok = p.w_r.dims2() == (m, h)
        && [&p.w_z, &p.w_h].iter().all(|w| w.dims2() == (m, h))
        && [&p.u_r, &p.u_z, &p.u_h].iter().all(|u| u.dims2() == (h, h))
        && [&p.b_r, &p.b_z, &p.b_h].iter().all(|b| b.dims2() == (1, h));
    if !shapes_ok || x_t.len() != m || h_prev.len() != h {
        return Err(Error::shape(alloc::format!(
            "GRU cell with input {m}, hidden {h} given x of {} and h of {}",
            x_t.len(),
            h_prev.len()
        )));
    }
    let r: Vec<f64> = gate(x_t, &p.w_r, h_prev, &p.u_r, &p.b_r).into_iter().map(sigmoid).collect();
    let z: Vec<f64> = gate(x_t, &p.w_z, h_prev, &p.u_z, &p.b_z).into_iter().map(sigmoid).collect();
    let mut cand = p.b_h.as_slice().to_vec();
    for (i, xi) in x_t.iter().enumerate() {
        cand.iter_mut().zip(p.w_h.row_slice(i)).for_each(|(o, w)| *o += xi * w);
    }
    let mut uh = vec![0.0; h];
    for (i, hi) in h_prev.iter().enumerate() {
        uh.iter_mut().zip(p.u_h.row_slice(i)).for_each(|(o, u)| *o += hi * u);
    }
    Ok((0..h)
        .map(|k| {
            let ht = libm::tanh(cand[k] + r[k] * uh[k]);
            (1.0 - z[k]) * h_prev[k] + z[k] * ht
        })
        .collect())
}

/// GRU step as graph nodes; parameters are looked up under `prefix.`.
pub fn gru_cell_node(g: &mut Graph, x: NodeId, h: NodeId, prefix: &str) -> NodeId {
    let p = |g: &mut Graph, n: &str| g.param(&alloc::format!("{prefix}.{n}"));
    let lin = |g: &mut Graph, w: &str, u: &str, b: &str, hin: NodeId| {
        let (w, u, b) = (p(g, w), p(g, u), p(g, b));
        let xw = g.matmul(x, w);
        let hu = g.matmul(hin, u);
        let s = g.add(xw, hu);
        g.add_bias(s, b)
    };
    let r_pre = lin(g, "w_r", "u_r", "b_r", h);
    let r = g.sigmoid(r_pre);
    let z_pre = lin(g, "w_z", "u_z", "b_z", h);
    let z = g.sigmoid(z_pre);
    let (w_h, u_h, b_h) = (p(g, "w_h"), p(g, "u_h"), p(g, "b_h"));
    let xw = g.matmul(x, w_h);
    let hu = g.matmul(h, u_h);
    let gated = g.mul(r, hu);
    let s = g.add(xw, gated);
    let s = g.add_bias(s, b_h);
    let cand = g.tanh(s);
    // (1 − z)⊙h + z⊙h̃ = h + z⊙(h̃ − h)
    let diff = g.sub(cand, h);
    let step = g.mul(z, diff);
    g.add(h, step)
}

/// LSTM step; returns `(h, c)`.
pub fn lstm_cell_node(g: &mut Graph, x: NodeId, h: NodeId, c: NodeId, prefix: &str) -> (NodeId, NodeId) {
    let mut gates = [x; 4];
    for (slot, name) in gates.iter_mut().zip(LSTM_GATES) {
        let w = g.param(&alloc::format!("{prefix}.w_{name}"));
        let u = g.param(&alloc::format!("{prefix}.u_{name}"));
        let b = g.param(&alloc::format!("{prefix}.b_{name}"));
        let xw = g.matmul(x, w);
        let hu = g.matmul(h, u);
        let s = g.add(xw, hu);
        *slot = g.add_bias(s, b);
    }
    let i = g.sigmoid(gates[0]);
    let f = g.sigmoid(gates[1]);
    let o = g.sigmoid(gates[2]);
    let cand = g.tanh(gates[3]);
    let keep = g.mul(f, c);
    let write = g.mul(i, cand);
    let c_next = g.add(keep, write);
    let tc = g.tanh(c_next);
    (g.mul(o, tc), c_next)
}

/// Attention pooling over per-step states `B × F`; returns `(pooled B × F, weights B × q)`.
pub fn attention_node(g: &mut Graph, states: &[NodeId], prefix: &str) -> (NodeId, NodeId) {
    let w = g.param(&alloc::format!("{prefix}.w"));
    let b = g.param(&alloc::format!("{prefix}.b"));
    let u = g.param(&alloc::format!("{prefix}.u"));
    let scores: Vec<NodeId> = states
        .iter()
        .map(|&h| {
            let a = g.affine(h, w, b);
            let a = g.tanh(a);
            g.matmul(a, u)
        })
        .collect();
    let scores = g.concat_cols(&scores);
    let weights = g.softmax_rows(scores);
    let mut pooled = None;
    for (t, &h) in states.iter().enumerate() {
        let wt = g.slice_cols(weights, t, 1);
        let term = g.scale_rows(h, wt);
        pooled = Some(match pooled {
            None => term,
            Some(acc) => g.add(acc, term),
        });
    }
    (pooled.expect("at least one step"), weights)
}

/// Architecture hyper-parameters of a [`SequenceClassifier`].
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClassifierShape {
    pub variant: Variant,
    /// Time steps per window.
    pub q: usize,
    /// Features per time step.
    pub input_dim: usize,
    pub hidden: usize,
    pub attention_size: usize,
    pub dropout: f64,
}

impl ClassifierShape {
    pub fn new(variant: Variant, q: usize, input_dim: usize) -> Self {
        Self {
            variant,
            q,
            input_dim,
            hidden: HIDDEN,
            attention_size: ATTENTION_SIZE,
            dropout: DROPOUT,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.q == 0 {
            return Err(Error::invalid("empty sequence: q must be at least 1"));
        }
        if self.input_dim == 0 || self.hidden == 0 || self.attention_size == 0 {
            return Err(Error::invalid("classifier dimensions must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid("dropout must lie in [0, 1)"));
        }
        Ok(())
    }

    fn pooled_dim(&self) -> usize {
        match self.variant {
            Variant::BigruAttention => 2 * self.hidden,
            _ => self.hidden,
        }
    }
}

/// A trained or freshly initialized classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceClassifier {
    pub shape: ClassifierShape,
    pub params: ParamSet,
}

/// Class probabilities (`B × 2`, column 1 is stable) and, for the attention
/// variant, attention weights (`B × q`).
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub probabilities: DenseArray,
    pub attention: Option<DenseArray>,
}

struct Built {
    graph: Graph,
    probs: NodeId,
    attention: Option<NodeId>,
}

fn build(shape: &ClassifierShape) -> Built {
    let (q, m, h) = (shape.q, shape.input_dim, shape.hidden);
    let mut g = Graph::new();
    let x = g.input("x");
    let h0 = g.input("h0");
    let steps: Vec<NodeId> = (0..q).map(|t| g.slice_cols(x, t * m, m)).collect();
    let _ = h;
    let (pooled, attention) = match shape.variant {
        Variant::BigruAttention => {
            let mut fwd = Vec::with_capacity(q);
            let mut state = h0;
            for &xt in &steps {
                state = gru_cell_node(&mut g, xt, state, "fwd");
                fwd.push(state);
            }
            let mut bwd = vec![h0; q];
            let mut state = h0;
            for t in (0..q).rev() {
                state = gru_cell_node(&mut g, steps[t], state, "bwd");
                bwd[t] = state;
            }
            let outputs: Vec<NodeId> = (0..q)
                .map(|t| {
                    let both = g.concat_cols(&[fwd[t], bwd[t]]);
                    g.dropout(both, shape.dropout)
                })
                .collect();
            let (s, w) = attention_node(&mut g, &outputs, "att");
            (s, Some(w))
        }
        Variant::Gru | Variant::Lstm => {
            let mut state = h0;
            let mut cell = h0;
            let mut total = None;
            for &xt in &steps {
                state = if shape.variant == Variant::Gru {
                    gru_cell_node(&mut g, xt, state, "gru")
                } else {
                    let (hn, cn) = lstm_cell_node(&mut g, xt, state, cell, "lstm");
                    cell = cn;
                    hn
                };
                let out = g.dropout(state, shape.dropout);
                total = Some(match total {
                    None => out,
                    Some(acc) => g.add(acc, out),
                });
            }
            let mean = g.scale_shift(total.expect("q ≥ 1"), 1.0 / q as f64, 0.0);
            (mean, None)
        }
    };
    let s = g.dropout(pooled, shape.dropout);
    let w = g.param("dense.w");
    let b = g.param("dense.b");
    let logits = g.affine(s, w, b);
    let probs = g.softmax_rows(logits);
    Built { graph: g, probs, attention }
}

fn build_with_loss(shape: &ClassifierShape) -> (Built, NodeId) {
    let mut built = build(shape);
    let target = built.graph.input("y");
    let loss = mse_loss_node(&mut built.graph, built.probs, target, CLASSES);
    (built, loss)
}

/// Training graph of a classifier: inputs `x` (`B × q·m`), `h0` (`B × H`,
/// zeros) and one-hot targets `y` (`B × 2`); returns the graph and its loss node.
pub fn loss_graph(shape: &ClassifierShape) -> Result<(Graph, NodeId)> {
    shape.validate()?;
    let (built, loss) = build_with_loss(shape);
    Ok((built.graph, loss))
}

impl SequenceClassifier {
    /// Glorot-uniform matrices, zero biases and a scaled Gaussian context vector.
    pub fn new(shape: ClassifierShape, seed: u64) -> Result<Self> {
        shape.validate()?;
        let (m, h, a) = (shape.input_dim, shape.hidden, shape.attention_size);
        let mut r = rng::seeded(rng::derive_seed(seed, 0));
        let mut params = ParamSet::new();
        let gru = |r: &mut rng::Rng, params: &mut ParamSet, prefix: &str| {
            for g in ["r", "z", "h"] {
                params.insert(alloc::format!("{prefix}.w_{g}"), glorot(r, m, h));
                params.insert(alloc::format!("{prefix}.u_{g}"), glorot(r, h, h));
                params.insert(alloc::format!("{prefix}.b_{g}"), DenseArray::zeros(&[1, h]));
            }
        };
        match shape.variant {
            Variant::BigruAttention => {
                gru(&mut r, &mut params, "fwd");
                gru(&mut r, &mut params, "bwd");
                params.insert("att.w", glorot(&mut r, 2 * h, a));
                params.insert("att.b", DenseArray::zeros(&[1, a]));
                let scale = 1.0 / libm::sqrt(a as f64);
                let u = (0..a).map(|_| scale * rng::standard_normal(&mut r)).collect();
                params.insert("att.u", DenseArray::matrix(a, 1, u)?);
            }
            Variant::Gru => gru(&mut r, &mut params, "gru"),
            Variant::Lstm => {
                for g in LSTM_GATES {
                    params.insert(alloc::format!("lstm.w_{g}"), glorot(&mut r, m, h));
                    params.insert(alloc::format!("lstm.u_{g}"), glorot(&mut r, h, h));
                    params.insert(alloc::format!("lstm.b_{g}"), DenseArray::zeros(&[1, h]));
                }
            }
        }
        params.insert("dense.w", glorot(&mut r, shape.pooled_dim(), CLASSES));
        params.insert("dense.b", DenseArray::zeros(&[1, CLASSES]));
        Ok(Self { shape, params })
    }

    /// Wraps existing parameters after checking every expected array is present with the right shape.
    pub fn from_params(shape: ClassifierShape, params: ParamSet) -> Result<Self> {
        let reference = Self::new(shape, 0)?;
        for (name, arr) in reference.params.iter() {
            let got = params.require(name)?;
            if got.shape() != arr.shape() {
                return Err(Error::shape(alloc::format!(
                    "`{name}`: expected {:?}, found {:?}",
                    arr.shape(),
                    got.shape()
                )));
            }
        }
        if params.len() != reference.params.len() {
            return Err(Error::invalid("unexpected extra parameters for this variant"));
        }
        Ok(Self { shape, params })
    }

    pub fn feature_dim(&self) -> usize {
        self.shape.q * self.shape.input_dim
    }

    /// Forward pass on a batch of normalized flattened windows (`B × q·m`).
    pub fn forward(&self, x: &DenseArray, mode: Mode) -> Result<ForwardOutput> {
        if x.cols() != self.feature_dim() {
            return Err(Error::shape(alloc::format!(
                "windows of {} features, model expects {}",
                x.cols(),
                self.feature_dim()
            )));
        }
        let mut built = build(&self.shape);
        let h0 = DenseArray::zeros(&[x.rows(), self.shape.hidden]);
        let mut b = Bindings::new();
        b.bind("x", x).bind("h0", &h0).bind_params(&self.params);
        built.graph.forward(&b, mode)?;
        Ok(ForwardOutput {
            probabilities: built.graph.value(built.probs).expect("evaluated").clone(),
            attention: built.attention.map(|a| built.graph.value(a).expect("evaluated").clone()),
        })
    }

    /// Stable-class probability for each row, evaluated in chunks without dropout.
    pub fn predict_stable(&self, x: &DenseArray) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(x.rows());
        let d = x.cols();
        for chunk in x.as_slice().chunks(256 * d.max(1)) {
            let part = DenseArray::matrix(chunk.len() / d, d, chunk.to_vec())?;
            let f = self.forward(&part, Mode::Inference)?;
            out.extend((0..part.rows()).map(|i| f.probabilities.get(i, 1)));
        }
        Ok(out)
    }

    /// Verdict and probabilities for one raw `q × m` window.
    pub fn assess_window(&self, window: &DenseArray, normalization: &crate::datagen::Normalization) -> Result<Assessment> {
        if window.dims2() != (self.shape.q, self.shape.input_dim) {
            return Err(Error::shape(alloc::format!(
                "window {:?}, model expects {}×{}",
                window.shape(),
                self.shape.q,
                self.shape.input_dim
            )));
        }
        if normalization.dim() != self.feature_dim() {
            return Err(Error::shape("normalization bounds do not match the model"));
        }
        let x = DenseArray::row(normalization.normalize(window.as_slice()));
        let f = self.forward(&x, Mode::Inference)?;
        let p = [f.probabilities.get(0, 0), f.probabilities.get(0, 1)];
        Ok(Assessment {
            verdict: verdict(p[1]),
            probabilities: p,
            latency_ms: 0.0,
        })
    }
}

/// Stable when the stable-class probability exceeds one half.
pub fn verdict(p_stable: f64) -> Stability {
    if p_stable > 0.5 {
        Stability::Stable
    } else {
        Stability::Unstable
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Assessment {
    pub verdict: Stability,
    /// `[unstable, stable]`.
    pub probabilities: [f64; 2],
    pub latency_ms: f64,
}

/// Applies normalization, runs the model in inference mode and times the call.
#[cfg(feature = "std")]
pub fn assess(
    model: &SequenceClassifier,
    window: &DenseArray,
    normalization: &crate::datagen::Normalization,
) -> Result<Assessment> {
    let start = std::time::Instant::now();
    let mut a = model.assess_window(window, normalization)?;
    a.latency_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(a)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct ClassifierTrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Stop once an epoch's mean training loss falls below this value.
    pub early_stop_loss: Option<f64>,
}

impl Default for ClassifierTrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 64,
            epochs: 200,
            seed: 0,
            early_stop_loss: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedClassifier {
    pub model: SequenceClassifier,
    pub curve: Vec<EpochRecord>,
}

/// Normalized features and labels of the given sample indices.
pub fn design_matrix(dataset: &LabeledDataset, indices: &[usize]) -> Result<(DenseArray, Vec<Stability>)> {
    if indices.is_empty() {
        return Err(Error::invalid("no samples selected"));
    }
    let d = dataset.feature_dim();
    let mut data = Vec::with_capacity(indices.len() * d);
    let mut labels = Vec::with_capacity(indices.len());
    for &i in indices {
        let s = &dataset.samples[i];
        let label = s
            .label
            .known()
            .ok_or_else(|| Error::invalid(alloc::format!("sample {} is unlabeled", s.id)))?;
        data.extend(dataset.normalization.normalize(&s.features));
        labels.push(label);
    }
    Ok((DenseArray::matrix(indices.len(), d, data)?, labels))
}

fn accuracy(p_stable: &[f64], labels: &[Stability]) -> f64 {
    let hits = p_stable.iter().zip(labels).filter(|(p, l)| verdict(**p) == **l).count();
    hits as f64 / labels.len() as f64
}

fn one_hot_targets(labels: &[Stability]) -> DenseArray {
    let mut y = DenseArray::zeros(&[labels.len(), CLASSES]);
    for (i, l) in labels.iter().enumerate() {
        y.set(i, l.index(), 1.0);
    }
    y
}

/// Mini-batch Adam on the squared-error loss over shuffled epochs.
pub fn train_classifier(
    dataset: &LabeledDataset,
    shape: ClassifierShape,
    config: &ClassifierTrainConfig,
) -> Result<TrainedClassifier> {
    if !(config.learning_rate > 0.0) || config.batch_size == 0 {
        return Err(Error::invalid("learning rate and batch size must be positive"));
    }
    if shape.q * shape.input_dim != dataset.feature_dim() {
        return Err(Error::shape("classifier shape does not match the dataset windows"));
    }
    let (x, labels) = design_matrix(dataset, &dataset.train)?;
    let test = if dataset.test.is_empty() {
        None
    } else {
        Some(design_matrix(dataset, &dataset.test)?)
    };
    let mut model = SequenceClassifier::new(shape, config.seed)?;
    let adam = AdamConfig {
        learning_rate: config.learning_rate,
        ..AdamConfig::default()
    };
    let mut state = AdamState::new(&model.params, adam)?;
    let (mut built, loss) = build_with_loss(&shape);

    let n = x.rows();
    let d = x.cols();
    let mut order: Vec<usize> = (0..n).collect();
    let mut shuffle_rng = rng::seeded(rng::derive_seed(config.seed, 1));
    let mut step = 0u64;
    let mut curve = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        rng::shuffle(&mut shuffle_rng, &mut order);
        let mut loss_sum = 0.0;
        let mut hits = 0usize;
        for batch in order.chunks(config.batch_size) {
            let xb = DenseArray::matrix(
                batch.len(),
                d,
                batch.iter().flat_map(|&i| x.row_slice(i).iter().copied()).collect(),
            )?;
            let lab: Vec<Stability> = batch.iter().map(|&i| labels[i]).collect();
            let yb = one_hot_targets(&lab);
            let h0 = DenseArray::zeros(&[batch.len(), shape.hidden]);
            let grads = {
                let mut b = Bindings::new();
                b.bind("x", &xb).bind("h0", &h0).bind("y", &yb).bind_params(&model.params);
                let seed = rng::derive_seed(config.seed, 2 + step);
                built.graph.forward(&b, Mode::Train { seed })?;
                let l = built.graph.value(loss).and_then(DenseArray::item).unwrap_or(f64::NAN);
                if !l.is_finite() {
                    return Err(Error::Divergence {
                        iteration: epoch,
                        detail: "classifier loss is not finite".to_string(),
                    });
                }
                loss_sum += l * batch.len() as f64;
                let p = built.graph.value(built.probs).expect("evaluated");
                hits += lab.iter().enumerate().filter(|(i, l)| verdict(p.get(*i, 1)) == **l).count();
                built.graph.backward(loss)?
            };
            adam_step(&mut model.params, &grads, &mut state)?;
            step += 1;
        }
        let mean_loss = loss_sum / n as f64;
        let test_accuracy = match &test {
            Some((tx, tl)) => Some(accuracy(&model.predict_stable(tx)?, tl)),
            None => None,
        };
        curve.push(EpochRecord {
            epoch: epoch + 1,
            loss: mean_loss,
            train_accuracy: hits as f64 / n as f64,
            test_accuracy,
        });
        if config.early_stop_loss.is_some_and(|t| mean_loss < t) {
            break;
        }
    }
    Ok(TrainedClassifier { model, curve })
}

/// Hard predictions and stable-class scores for the test partition.
pub fn predict_partition(model: &SequenceClassifier, dataset: &LabeledDataset, indices: &[usize]) -> Result<(Vec<Stability>, Vec<Stability>, Vec<f64>)> {
    let (x, truth) = design_matrix(dataset, indices)?;
    let scores = model.predict_stable(&x)?;
    let predicted = scores.iter().map(|&p| verdict(p)).collect();
    Ok((truth, predicted, scores))
}

pub fn parameter_names(model: &SequenceClassifier) -> Vec<String> {
    model.params.iter().map(|(n, _)| n.to_string()).collect()
}
