//! Conditional GAN augmentation and the WD / MMD / FID fidelity metrics.
//!
//! The generator maps `(z, y)` (Gaussian noise plus a one-hot class) to a
//! window in the normalized cube; the discriminator scores `(x, y)` pairs.
//! Training alternates `k` discriminator updates with one generator update.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::datagen::{Label, LabeledDataset, Origin, Stability, WindowSample};
use crate::error::{Error, Result};
use crate::graph::{Bindings, Graph, Mode, NodeId};
use crate::linalg;
use crate::loss::{discriminator_loss_node, generator_loss_node, GanLossMode};
use crate::optim::{adam_step, AdamConfig, AdamState};
use crate::params::{glorot, ParamSet};
use crate::rng::{self, Rng, RngExt};
use crate::tensor::DenseArray;

pub const CLASS_COUNT: usize = 2;
pub const NOISE_DIM: usize = 100;
const LEAK: f64 = 0.5;

pub fn one_hot(label: usize, classes: usize) -> Result<Vec<f64>> {
    if label >= classes {
        return Err(Error::invalid(alloc::format!("label {label} out of range for {classes} classes")));
    }
    let mut v = vec![0.0; classes];
    v[label] = 1.0;
    Ok(v)
}

fn one_hot_rows(labels: &[Stability]) -> DenseArray {
    let mut y = DenseArray::zeros(&[labels.len(), CLASS_COUNT]);
    for (i, l) in labels.iter().enumerate() {
        y.set(i, l.index(), 1.0);
    }
    y
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct GanTrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    /// Discriminator updates per generator update.
    pub k: usize,
    pub batch_size: usize,
    pub iterations: usize,
    pub seed: u64,
    pub loss: GanLossMode,
    /// Fidelity snapshot period in iterations; 0 disables snapshots.
    pub snapshot_every: usize,
    pub noise_dim: usize,
    pub generator_hidden: [usize; 2],
    pub discriminator_hidden: [usize; 2],
}

impl Default for GanTrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.5,
            k: 4,
            batch_size: 32,
            iterations: 3000,
            seed: 0,
            loss: GanLossMode::LeastSquares,
            snapshot_every: 250,
            noise_dim: NOISE_DIM,
            generator_hidden: [256, 256],
            discriminator_hidden: [256, 128],
        }
    }
}

impl GanTrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || self.k == 0 || self.batch_size == 0 || self.noise_dim == 0 {
            return Err(Error::invalid("GAN config needs positive learning rate, k, batch size and noise dim"));
        }
        if self.generator_hidden.contains(&0) || self.discriminator_hidden.contains(&0) {
            return Err(Error::invalid("hidden layer widths must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FidelitySnapshot {
    pub iteration: usize,
    pub wd: f64,
    pub mmd: f64,
    pub fid: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GanHistory {
    /// Loss of the last discriminator update in each iteration.
    pub discriminator_loss: Vec<f64>,
    pub generator_loss: Vec<f64>,
    pub snapshots: Vec<FidelitySnapshot>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerativeModel {
    pub feature_dim: usize,
    pub noise_dim: usize,
    pub loss: GanLossMode,
    /// Parameters named `gen.*`.
    pub generator: ParamSet,
    /// Parameters named `disc.*`.
    pub discriminator: ParamSet,
    pub iterations_trained: usize,
    pub history: GanHistory,
}

fn dense_layers(rng: &mut Rng, prefix: &str, widths: &[usize]) -> ParamSet {
    let mut p = ParamSet::new();
    for (i, w) in widths.windows(2).enumerate() {
        p.insert(alloc::format!("{prefix}.w{}", i + 1), glorot(rng, w[0], w[1]));
        p.insert(alloc::format!("{prefix}.b{}", i + 1), DenseArray::zeros(&[1, w[1]]));
    }
    p
}

fn mlp(g: &mut Graph, mut h: NodeId, prefix: &str, layers: usize, tanh_head: bool) -> NodeId {
    for i in 1..=layers {
        let w = g.param(&alloc::format!("{prefix}.w{i}"));
        let b = g.param(&alloc::format!("{prefix}.b{i}"));
        h = g.affine(h, w, b);
        if i < layers {
            h = g.leaky_relu(h, LEAK);
        }
    }
    if tanh_head {
        g.tanh(h)
    } else {
        h
    }
}

fn generator_node(g: &mut Graph, z: NodeId, y: NodeId) -> NodeId {
    let input = g.concat_cols(&[z, y]);
    mlp(g, input, "gen", 3, true)
}

fn discriminator_node(g: &mut Graph, x: NodeId, y: NodeId) -> NodeId {
    let input = g.concat_cols(&[x, y]);
    mlp(g, input, "disc", 3, false)
}

fn noise(rng: &mut Rng, rows: usize, cols: usize) -> DenseArray {
    let data = (0..rows * cols).map(|_| rng::standard_normal(rng)).collect();
    DenseArray::matrix(rows, cols, data).expect("rows×cols")
}

fn first_value(g: &Graph, node: NodeId) -> f64 {
    g.value(node).and_then(DenseArray::item).unwrap_or(f64::NAN)
}

impl GenerativeModel {
    /// A freshly initialized model (Glorot weights, zero biases).
    pub fn new(feature_dim: usize, config: &GanTrainConfig) -> Result<Self> {
        config.validate()?;
        if feature_dim == 0 {
            return Err(Error::invalid("feature dimension must be positive"));
        }
        let mut r = rng::seeded(rng::derive_seed(config.seed, 0));
        let [g1, g2] = config.generator_hidden;
        let [d1, d2] = config.discriminator_hidden;
        Ok(Self {
            feature_dim,
            noise_dim: config.noise_dim,
            loss: config.loss,
            generator: dense_layers(&mut r, "gen", &[config.noise_dim + CLASS_COUNT, g1, g2, feature_dim]),
            discriminator: dense_layers(&mut r, "disc", &[feature_dim + CLASS_COUNT, d1, d2, 1]),
            iterations_trained: 0,
            history: GanHistory::default(),
        })
    }

    /// Generator output for explicit noise rows and labels, in the normalized cube.
    pub fn generate_from(&self, z: &DenseArray, labels: &[Stability]) -> Result<DenseArray> {
        if z.rows() != labels.len() || z.cols() != self.noise_dim {
            return Err(Error::shape(alloc::format!(
                "noise {:?} for {} labels, noise dim {}",
                z.shape(),
                labels.len(),
                self.noise_dim
            )));
        }
        let mut g = Graph::new();
        let zn = g.input("z");
        let yn = g.input("y");
        let out = generator_node(&mut g, zn, yn);
        let y = one_hot_rows(labels);
        let mut b = Bindings::new();
        b.bind("z", z).bind("y", &y).bind_params(&self.generator);
        g.forward(&b, Mode::Inference)?;
        Ok(g.value(out).expect("evaluated").clone())
    }

    /// Raw discriminator scores for windows and labels.
    pub fn discriminate(&self, x: &DenseArray, labels: &[Stability]) -> Result<Vec<f64>> {
        if x.rows() != labels.len() {
            return Err(Error::shape("one label per row required"));
        }
        let mut g = Graph::new();
        let xn = g.input("x");
        let yn = g.input("y");
        let out = discriminator_node(&mut g, xn, yn);
        let y = one_hot_rows(labels);
        let mut b = Bindings::new();
        b.bind("x", x).bind("y", &y).bind_params(&self.discriminator);
        g.forward(&b, Mode::Inference)?;
        Ok(g.value(out).expect("evaluated").as_slice().to_vec())
    }
}

fn sample_batch(rng: &mut Rng, pool: &mut [usize], size: usize) -> Vec<usize> {
    let n = pool.len();
    for i in 0..size {
        let j = rng.random_range(i..n);
        pool.swap(i, j);
    }
    pool[..size].to_vec()
}

fn gather(x: &DenseArray, idx: &[usize]) -> DenseArray {
    let d = x.cols();
    let data = idx.iter().flat_map(|&i| x.row_slice(i).iter().copied()).collect();
    DenseArray::matrix(idx.len(), d, data).expect("gathered rows")
}

/// Trains a conditional GAN on normalized windows (`N × d`, values in
/// `[-1, 1]`) with their class labels.
pub fn train_gan(features: &DenseArray, labels: &[Stability], config: &GanTrainConfig) -> Result<GenerativeModel> {
    let (n, d) = features.dims2();
    if labels.len() != n {
        return Err(Error::shape(alloc::format!("{} labels for {n} windows", labels.len())));
    }
    if !labels.contains(&Stability::Stable) || !labels.contains(&Stability::Unstable) {
        return Err(Error::invalid("GAN training needs both classes"));
    }
    if features.as_slice().iter().any(|v| !(v.abs() <= 1.0 + 1e-9)) {
        return Err(Error::invalid("GAN features must be normalized to [-1, 1]"));
    }
    let mut model = GenerativeModel::new(d, config)?;
    let adam = AdamConfig {
        learning_rate: config.learning_rate,
        beta1: config.beta1,
        ..AdamConfig::default()
    };
    let mut g_state = AdamState::new(&model.generator, adam)?;
    let mut d_state = AdamState::new(&model.discriminator, adam)?;

    let mut gen_graph = Graph::new();
    let (gz, gy) = (gen_graph.input("z"), gen_graph.input("y"));
    let gen_out = generator_node(&mut gen_graph, gz, gy);

    let mut d_graph = Graph::new();
    let (xr, yr) = (d_graph.input("x_real"), d_graph.input("y_real"));
    let (xf, yf) = (d_graph.input("x_fake"), d_graph.input("y_fake"));
    let sr = discriminator_node(&mut d_graph, xr, yr);
    let sf = discriminator_node(&mut d_graph, xf, yf);
    let d_loss = discriminator_loss_node(&mut d_graph, sr, sf, config.loss);

    let mut g_graph = Graph::new();
    let (z2, y2) = (g_graph.input("z"), g_graph.input("y"));
    let fake = generator_node(&mut g_graph, z2, y2);
    let score = discriminator_node(&mut g_graph, fake, y2);
    let g_loss = generator_loss_node(&mut g_graph, score, config.loss);

    let batch = config.batch_size.min(n);
    let mut r = rng::seeded(rng::derive_seed(config.seed, 1));
    let mut pool: Vec<usize> = (0..n).collect();
    let divergence = |iteration: usize, what: &str, value: f64| Error::Divergence {
        iteration,
        detail: alloc::format!("{what} loss is {value}"),
    };

    for it in 0..config.iterations {
        let mut last_d = 0.0;
        for _ in 0..config.k {
            let idx = sample_batch(&mut r, &mut pool, batch);
            let x_real = gather(features, &idx);
            let lab: Vec<Stability> = idx.iter().map(|&i| labels[i]).collect();
            let y_real = one_hot_rows(&lab);
            let z = noise(&mut r, batch, config.noise_dim);
            let x_fake = {
                let mut b = Bindings::new();
                b.bind("z", &z).bind("y", &y_real).bind_params(&model.generator);
                gen_graph.forward(&b, Mode::Inference)?;
                gen_graph.value(gen_out).expect("evaluated").clone()
            };
            let grads = {
                let mut b = Bindings::new();
                b.bind("x_real", &x_real)
                    .bind("y_real", &y_real)
                    .bind("x_fake", &x_fake)
                    .bind("y_fake", &y_real)
                    .bind_params(&model.discriminator);
                d_graph.forward(&b, Mode::Inference)?;
                last_d = first_value(&d_graph, d_loss);
                if !last_d.is_finite() {
                    return Err(divergence(it, "discriminator", last_d));
                }
                d_graph.backward(d_loss)?
            };
            adam_step(&mut model.discriminator, &grads, &mut d_state)?;
        }

        let idx = sample_batch(&mut r, &mut pool, batch);
        let lab: Vec<Stability> = idx.iter().map(|&i| labels[i]).collect();
        let y = one_hot_rows(&lab);
        let z = noise(&mut r, batch, config.noise_dim);
        let grads = {
            let mut b = Bindings::new();
            b.bind("z", &z)
                .bind("y", &y)
                .bind_params(&model.generator)
                .bind_params(&model.discriminator);
            g_graph.forward(&b, Mode::Inference)?;
            let v = first_value(&g_graph, g_loss);
            if !v.is_finite() {
                return Err(divergence(it, "generator", v));
            }
            model.history.generator_loss.push(v);
            g_graph.backward(g_loss)?
        };
        adam_step(&mut model.generator, &grads, &mut g_state)?;
        model.history.discriminator_loss.push(last_d);
        model.iterations_trained = it + 1;

        if config.snapshot_every > 0 && (it + 1) % config.snapshot_every == 0 {
            let seed = rng::derive_seed(config.seed, 2 + it as u64);
            let mut sr = rng::seeded(seed);
            let z = noise(&mut sr, n, config.noise_dim);
            let generated = model.generate_from(&z, labels)?;
            model.history.snapshots.push(FidelitySnapshot {
                iteration: it + 1,
                wd: wasserstein_distance(features, &generated)?,
                mmd: mmd(features, &generated, Bandwidth::Median)?,
                fid: fid(features, &generated)?,
            });
        }
    }
    Ok(model)
}

/// `count_per_class` normalized windows per class, unstable block first.
pub fn generate(model: &GenerativeModel, count_per_class: usize, seed: u64) -> Result<Vec<(Stability, Vec<f64>)>> {
    generate_counts(model, [count_per_class, count_per_class], seed)
}

/// Normalized windows with `counts[k]` samples of class index `k`.
pub fn generate_counts(model: &GenerativeModel, counts: [usize; 2], seed: u64) -> Result<Vec<(Stability, Vec<f64>)>> {
    let total = counts[0] + counts[1];
    if total == 0 {
        return Ok(Vec::new());
    }
    let labels: Vec<Stability> = [Stability::Unstable, Stability::Stable]
        .iter()
        .flat_map(|&s| core::iter::repeat(s).take(counts[s.index()]))
        .collect();
    let mut r = rng::seeded(seed);
    let z = noise(&mut r, total, model.noise_dim);
    let x = model.generate_from(&z, &labels)?;
    Ok(labels
        .into_iter()
        .enumerate()
        .map(|(i, l)| (l, x.row_slice(i).to_vec()))
        .collect())
}

/// Adds generated windows to the training partition until the dataset holds
/// `target_total` samples. The test partition is left untouched.
pub fn augment(original: &LabeledDataset, model: &GenerativeModel, target_total: usize, seed: u64) -> Result<LabeledDataset> {
    if model.iterations_trained == 0 {
        return Err(Error::invalid("generative model is untrained"));
    }
    if model.feature_dim != original.feature_dim() {
        return Err(Error::shape(alloc::format!(
            "model produces {} features, dataset holds {}",
            model.feature_dim,
            original.feature_dim()
        )));
    }
    let have = original.samples.len();
    if target_total < have {
        return Err(Error::invalid(alloc::format!("target {target_total} is below the {have} original samples")));
    }
    let extra = target_total - have;
    let counts = [extra / 2, extra - extra / 2];
    let generated = generate_counts(model, counts, seed)?;
    let first_id = original.samples.iter().map(|s| s.id + 1).max().unwrap_or(0);
    let mut out = original.clone();
    for (next_id, (class, row)) in (first_id..).zip(generated) {
        out.train.push(out.samples.len());
        out.samples.push(WindowSample {
            id: next_id,
            label: Label::from(class),
            origin: Origin::Generated,
            scenario_id: None,
            features: original.normalization.denormalize(&row),
        });
    }
    Ok(out)
}

fn check_pair(a: &DenseArray, b: &DenseArray) -> Result<()> {
    if a.cols() != b.cols() {
        return Err(Error::shape(alloc::format!(
            "feature dimensions differ: {} vs {}",
            a.cols(),
            b.cols()
        )));
    }
    if !a.all_finite() || !b.all_finite() {
        return Err(Error::NonFinite { context: String::from("fidelity metric input") });
    }
    Ok(())
}

fn column(x: &DenseArray, j: usize) -> Vec<f64> {
    let mut c: Vec<f64> = (0..x.rows()).map(|i| x.get(i, j)).collect();
    c.sort_by(f64::total_cmp);
    c
}

/// Exact 1-D Wasserstein-1 between the empirical distributions of two sorted samples.
fn w1_sorted(a: &[f64], b: &[f64]) -> f64 {
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut pos = 0.0;
    let mut total = 0.0;
    while i < a.len() && j < b.len() {
        let next_a = (i + 1) as f64 / n;
        let next_b = (j + 1) as f64 / m;
        let next = next_a.min(next_b);
        total += (next - pos) * (a[i] - b[j]).abs();
        pos = next;
        if next_a <= next {
            i += 1;
        }
        if next_b <= next {
            j += 1;
        }
    }
    total
}

/// Coordinate-wise 1-D Wasserstein-1 distance averaged over features.
pub fn wasserstein_distance(real: &DenseArray, generated: &DenseArray) -> Result<f64> {
    check_pair(real, generated)?;
    let d = real.cols();
    let total: f64 = (0..d).map(|j| w1_sorted(&column(real, j), &column(generated, j))).sum();
    Ok(total / d as f64)
}

/// RBF kernel width for [`mmd`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    Fixed(f64),
    /// Median pairwise distance over the pooled samples.
    Median,
}

/// Median Euclidean distance over all distinct pairs of rows; 1 when every row coincides.
pub fn median_distance(x: &DenseArray) -> f64 {
    let n = x.rows();
    let mut d: Vec<f64> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .map(|(i, j)| libm::sqrt(crate::labeling::sq_dist(x.row_slice(i), x.row_slice(j))))
        .collect();
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    let mid = d.len() / 2;
    let m = if d.len() % 2 == 0 { 0.5 * (d[mid - 1] + d[mid]) } else { d[mid] };
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

fn stack(a: &DenseArray, b: &DenseArray) -> DenseArray {
    let mut data = a.as_slice().to_vec();
    data.extend_from_slice(b.as_slice());
    DenseArray::matrix(a.rows() + b.rows(), a.cols(), data).expect("same width")
}

fn kernel_mean(a: &DenseArray, b: &DenseArray, gamma: f64) -> f64 {
    let mut total = 0.0;
    for i in 0..a.rows() {
        for j in 0..b.rows() {
            total += libm::exp(-gamma * crate::labeling::sq_dist(a.row_slice(i), b.row_slice(j)));
        }
    }
    total / (a.rows() * b.rows()) as f64
}

/// Biased (V-statistic) squared maximum mean discrepancy with the kernel
/// `exp(-‖x − x′‖² / (2σ²))`.
pub fn mmd(real: &DenseArray, generated: &DenseArray, bandwidth: Bandwidth) -> Result<f64> {
    check_pair(real, generated)?;
    let sigma = match bandwidth {
        Bandwidth::Fixed(s) if s > 0.0 && s.is_finite() => s,
        Bandwidth::Fixed(s) => return Err(Error::invalid(alloc::format!("bandwidth must be positive, got {s}"))),
        Bandwidth::Median => median_distance(&stack(real, generated)),
    };
    let gamma = 1.0 / (2.0 * sigma * sigma);
    let v = kernel_mean(real, real, gamma) + kernel_mean(generated, generated, gamma) - 2.0 * kernel_mean(real, generated, gamma);
    Ok(v.max(0.0))
}

fn mean_and_cov(x: &DenseArray) -> (Vec<f64>, Vec<f64>) {
    let (n, d) = x.dims2();
    let mut mu = vec![0.0; d];
    for i in 0..n {
        mu.iter_mut().zip(x.row_slice(i)).for_each(|(m, v)| *m += v);
    }
    mu.iter_mut().for_each(|m| *m /= n as f64);
    let mut centered = x.clone();
    for i in 0..n {
        let row = &mut centered.as_mut_slice()[i * d..(i + 1) * d];
        row.iter_mut().zip(&mu).for_each(|(v, m)| *v -= m);
    }
    let cov = centered.transpose().matmul(&centered).expect("d×n by n×d");
    let denom = (n.max(2) - 1) as f64;
    (mu, cov.into_vec().into_iter().map(|c| c / denom).collect())
}

const PSD_TOLERANCE: f64 = 1e-6;

fn clipped_sqrt(values: &[f64]) -> Result<Vec<f64>> {
    values
        .iter()
        .map(|&l| {
            if l < -PSD_TOLERANCE {
                Err(Error::invalid(alloc::format!("covariance has eigenvalue {l} below the clip tolerance")))
            } else {
                Ok(libm::sqrt(l.max(0.0)))
            }
        })
        .collect()
}

/// Fréchet distance between Gaussian fits of two sample sets:
/// `‖μ_r − μ_g‖² + Tr(C_r + C_g − 2 (C_r C_g)^{1/2})`.
/// Falls back to diagonal covariances when either set has at most `d` rows.
pub fn fid(real: &DenseArray, generated: &DenseArray) -> Result<f64> {
    check_pair(real, generated)?;
    let d = real.cols();
    let (mu_r, cov_r) = mean_and_cov(real);
    let (mu_g, cov_g) = mean_and_cov(generated);
    let mean_term: f64 = mu_r.iter().zip(&mu_g).map(|(a, b)| (a - b) * (a - b)).sum();
    if real.rows() <= d || generated.rows() <= d {
        let trace: f64 = (0..d)
            .map(|i| {
                let (a, b) = (cov_r[i * d + i], cov_g[i * d + i]);
                let s = libm::sqrt(a) - libm::sqrt(b);
                s * s
            })
            .sum();
        return Ok((mean_term + trace).max(0.0));
    }
    let (vals_r, vecs_r) = linalg::symmetric_eigen(&cov_r, d);
    let roots = clipped_sqrt(&vals_r)?;
    // S = C_r^{1/2}
    let mut s = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            s[i * d + j] = (0..d).map(|k| vecs_r[i * d + k] * roots[k] * vecs_r[j * d + k]).sum();
        }
    }
    let s_arr = DenseArray::matrix(d, d, s).expect("d×d");
    let cg = DenseArray::matrix(d, d, cov_g.clone()).expect("d×d");
    let m = s_arr.matmul(&cg)?.matmul(&s_arr)?;
    let (vals_m, _) = linalg::symmetric_eigen(m.as_slice(), d);
    let cross: f64 = clipped_sqrt(&vals_m)?.iter().sum();
    let trace_r: f64 = (0..d).map(|i| cov_r[i * d + i]).sum();
    let trace_g: f64 = (0..d).map(|i| cov_g[i * d + i]).sum();
    Ok((mean_term + trace_r + trace_g - 2.0 * cross).max(0.0))
}
