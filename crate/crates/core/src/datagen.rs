//! Contingency scenarios, surrogate post-disturbance trajectories, the
//! domain-knowledge pre-labeling rule, observation windows, measurement
//! noise, stratified splitting and min-max normalization.
//!
//! The surrogate replaces a full time-domain simulation. Each scenario draws
//! a latent severity in `[0, 1]` whose distribution is skewed towards
//! instability by heavier loading, larger motor share, longer clearing times
//! and faults near the sending end. Severity bands:
//!
//! | severity      | outcome    | final voltage          | recovery time constant |
//! |---------------|------------|------------------------|------------------------|
//! | `[0, 0.35)`   | stable     | `≥ 0.95` pu            | 0.08 – 0.23 s          |
//! | `[0.35, 0.5)` | ambiguous, stable   | `0.825 – 0.885` pu | 0.3 – 0.5 s  |
//! | `[0.5, 0.65)` | ambiguous, unstable | `0.785 – 0.835` pu after a sustained sag | rises 1.2 – 1.6 s after clearing |
//! | `[0.65, 1]`   | unstable   | `≤ 0.60` pu, decaying  | 0.25 – 0.55 s          |
//!
//! Ambiguous scenarios settle between the pre-labeling bands; the unstable
//! ones stay in a deep sag for over a second before recovering.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::rng::{self, RngExt};
use crate::tensor::DenseArray;

/// Fault instant in seconds.
pub const FAULT_TIME: f64 = 0.1;
/// Final interval inspected by [`prelabel`], in seconds.
pub const SETTLING_WINDOW: f64 = 1.0;
/// Minimum simulated horizon in seconds.
pub const MIN_HORIZON_SECONDS: f64 = 3.0;
pub const STABLE_VOLTAGE: f64 = 0.9;
pub const UNSTABLE_VOLTAGE: f64 = 0.75;

pub const LOAD_LEVELS: [f64; 3] = [0.8, 1.0, 1.2];
pub const MOTOR_FRACTIONS: [f64; 4] = [0.6, 0.7, 0.8, 0.9];
pub const FAULT_LOCATIONS: [f64; 5] = [0.0, 0.2, 0.4, 0.6, 0.8];
pub const CLEARING_TIME_RANGE: (f64, f64) = (0.15, 0.2);

/// Binary stability class. The discriminant is the class index used for
/// one-hot encoding and the CSV label code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Stability {
    Unstable = 0,
    Stable = 1,
}

impl Stability {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(Stability::Unstable),
            1 => Some(Stability::Stable),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stability::Stable => "stable",
            Stability::Unstable => "unstable",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Label {
    Stable,
    Unstable,
    Unlabeled,
}

impl Label {
    pub fn known(self) -> Option<Stability> {
        match self {
            Label::Stable => Some(Stability::Stable),
            Label::Unstable => Some(Stability::Unstable),
            Label::Unlabeled => None,
        }
    }

    /// CSV code: 1 stable, 0 unstable, -1 unlabeled.
    pub fn code(self) -> i8 {
        match self {
            Label::Stable => 1,
            Label::Unstable => 0,
            Label::Unlabeled => -1,
        }
    }

    pub fn from_code(code: i64) -> Option<Self> {
        match code {
            1 => Some(Label::Stable),
            0 => Some(Label::Unstable),
            -1 => Some(Label::Unlabeled),
            _ => None,
        }
    }
}

impl From<Stability> for Label {
    fn from(s: Stability) -> Self {
        match s {
            Stability::Stable => Label::Stable,
            Stability::Unstable => Label::Unstable,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Origin {
    Simulated,
    Generated,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Scenario {
    pub id: usize,
    /// Total load as a fraction of base.
    pub load_level: f64,
    /// Share of motor load in the composite load model.
    pub motor_fraction: f64,
    pub line_id: usize,
    /// Fault position as a fraction of the line length.
    pub fault_location: f64,
    /// Clearing instant in seconds.
    pub clearing_time: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GridConfig {
    pub line_count: usize,
    /// Clearing times are spread evenly over `[0.15, 0.2]` s.
    pub clearing_time_count: usize,
    pub seed: u64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            line_count: 10,
            clearing_time_count: 2,
            seed: 2022,
        }
    }
}

/// Cartesian product of load level × motor share × line × fault location ×
/// clearing time, in that nesting order.
pub fn build_scenario_grid(config: &GridConfig) -> Result<Vec<Scenario>> {
    if config.line_count == 0 || config.clearing_time_count == 0 {
        return Err(Error::invalid("scenario grid needs at least one line and one clearing time"));
    }
    let (lo, hi) = CLEARING_TIME_RANGE;
    let clearing: Vec<f64> = if config.clearing_time_count == 1 {
        vec![lo]
    } else {
        (0..config.clearing_time_count)
            .map(|i| lo + (hi - lo) * i as f64 / (config.clearing_time_count - 1) as f64)
            .collect()
    };
    let mut out = Vec::new();
    for &load_level in &LOAD_LEVELS {
        for &motor_fraction in &MOTOR_FRACTIONS {
            for line_id in 0..config.line_count {
                for &fault_location in &FAULT_LOCATIONS {
                    for &clearing_time in &clearing {
                        let id = out.len();
                        out.push(Scenario {
                            id,
                            load_level,
                            motor_fraction,
                            line_id,
                            fault_location,
                            clearing_time,
                            seed: rng::derive_seed(config.seed, id as u64),
                        });
                    }
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SimulationConfig {
    pub bus_count: usize,
    /// Sampling step in seconds.
    pub step: f64,
    /// Number of samples per trajectory.
    pub horizon: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            bus_count: 10,
            step: 0.01,
            horizon: 300,
        }
    }
}

/// Surrogate ground truth recorded with each simulated scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GroundTruth {
    pub outcome: Stability,
    /// True when the trajectory settles between the pre-labeling bands.
    pub ambiguous: bool,
    pub severity: f64,
}

/// One contingency's multivariate trajectory. Matrices are `horizon × L`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySample {
    pub id: usize,
    pub step: f64,
    pub voltage: DenseArray,
    pub active: DenseArray,
    pub reactive: DenseArray,
    pub label: Label,
    pub origin: Origin,
    pub scenario: Scenario,
    pub truth: Option<GroundTruth>,
}

impl TrajectorySample {
    pub fn bus_count(&self) -> usize {
        self.voltage.cols()
    }

    pub fn horizon(&self) -> usize {
        self.voltage.rows()
    }

    /// Index of the first sample at or after fault clearing.
    pub fn clearing_index(&self) -> usize {
        libm::round(self.scenario.clearing_time / self.step) as usize
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-x))
}

fn frac(x: f64) -> f64 {
    x - libm::floor(x)
}

/// Synthesizes the full-horizon trajectory of `scenario`.
pub fn simulate_trajectory(scenario: &Scenario, config: &SimulationConfig) -> Result<TrajectorySample> {
    let SimulationConfig { bus_count, step, horizon } = *config;
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::invalid("sampling step must be positive"));
    }
    if bus_count == 0 {
        return Err(Error::invalid("bus count must be positive"));
    }
    if (horizon as f64) * step < MIN_HORIZON_SECONDS - 1e-9 {
        return Err(Error::invalid(alloc::format!(
            "horizon of {horizon} steps at {step} s does not cover the fault and a {SETTLING_WINDOW} s settling window"
        )));
    }
    let mut r = rng::seeded(scenario.seed);

    let risk = 2.2 * (scenario.motor_fraction - 0.75) / 0.15
        + 1.6 * (scenario.load_level - 1.0) / 0.2
        + 1.4 * (scenario.clearing_time - 0.175) / 0.025
        + 0.8 * (0.4 - scenario.fault_location) / 0.4
        + 0.8 * rng::standard_normal(&mut r)
        - 0.15;
    let p_unstable = sigmoid(risk);
    let ambiguous = r.random::<f64>() < 0.30;
    let band = r.random::<f64>();
    let severity = if ambiguous {
        0.35 + 0.30 * band
    } else if r.random::<f64>() < p_unstable {
        0.65 + 0.35 * band
    } else {
        0.35 * band
    };
    let outcome = if severity < 0.5 { Stability::Stable } else { Stability::Unstable };

    let fault_pos = frac(scenario.line_id as f64 * 0.618_033_988_7 + 0.13 * scenario.fault_location);
    let tc = scenario.clearing_time;
    let mut voltage = vec![0.0; horizon * bus_count];
    let mut active = vec![0.0; horizon * bus_count];
    let mut reactive = vec![0.0; horizon * bus_count];

    for b in 0..bus_count {
        let bus_pos = b as f64 / bus_count as f64;
        let d = (bus_pos - fault_pos).abs();
        let closeness = 1.0 - 2.0 * d.min(1.0 - d);
        let jitter = rng::uniform(&mut r, -1.0, 1.0);
        let phase = rng::uniform(&mut r, 0.0, 2.0 * PI);
        let p0 = rng::uniform(&mut r, 0.6, 1.4);
        let q0 = rng::uniform(&mut r, 0.2, 0.5);

        let v_pre = 1.02 - 0.04 * (scenario.load_level - 0.8) / 0.4 + 0.01 * jitter;
        let v_fault = 0.15 + 0.45 * (1.0 - closeness) + 0.03 * jitter;
        let mut v_dip = 0.86 - 0.32 * severity - 0.06 * closeness + 0.015 * jitter;
        let mut rise_at = None;
        let (v_final, tau, amp) = if severity < 0.35 {
            (
                0.955 + 0.035 * (1.0 - severity / 0.35) + 0.005 * jitter,
                0.08 + 0.15 * severity / 0.35,
                0.03,
            )
        } else if severity < 0.5 {
            (
                0.88 - 0.05 * (severity - 0.35) / 0.15 + 0.005 * jitter,
                0.3 + 0.2 * band,
                0.01,
            )
        } else if severity < 0.65 {
            // delayed recovery: the sag persists, then voltage climbs into the ambiguous band
            let s = (severity - 0.5) / 0.15;
            v_dip = 0.58 - 0.06 * closeness + 0.015 * jitter;
            rise_at = Some(1.2 + 0.4 * s);
            (0.79 + 0.04 * (1.0 - s) + 0.005 * jitter, 0.12, 0.01)
        } else {
            let v = 0.59 - 0.20 * (severity - 0.65) / 0.35 + 0.01 * jitter;
            (v.min(v_dip - 0.03), 0.25 + 0.30 * (severity - 0.65) / 0.35, 0.015)
        };

        for t in 0..horizon {
            let time = t as f64 * step;
            let v = if time < FAULT_TIME {
                v_pre
            } else if time < tc {
                v_fault
            } else {
                let s = time - tc;
                let settling = match rise_at {
                    Some(at) => v_dip + (v_final - v_dip) * sigmoid((s - at) / tau),
                    None => v_final + (v_dip - v_final) * libm::exp(-s / tau),
                };
                settling + amp * libm::exp(-s / 0.3) * libm::sin(2.0 * PI * 1.2 * s + phase)
            };
            let v = v.max(0.0);
            let stall = scenario.motor_fraction * 1.5 * (0.85 - v).max(0.0);
            let p = p0 * scenario.load_level * v * v + 0.002 * rng::standard_normal(&mut r);
            let q = q0 * (0.3 + 2.0 * v * (1.0 - v) + stall) + 0.002 * rng::standard_normal(&mut r);
            voltage[t * bus_count + b] = v;
            active[t * bus_count + b] = p;
            reactive[t * bus_count + b] = q;
        }
    }

    Ok(TrajectorySample {
        id: scenario.id,
        step,
        voltage: DenseArray::matrix(horizon, bus_count, voltage)?,
        active: DenseArray::matrix(horizon, bus_count, active)?,
        reactive: DenseArray::matrix(horizon, bus_count, reactive)?,
        label: Label::Unlabeled,
        origin: Origin::Simulated,
        scenario: *scenario,
        truth: Some(GroundTruth {
            outcome,
            ambiguous,
            severity,
        }),
    })
}

/// Domain-knowledge rule on the final settling second: stable when every bus
/// voltage stays above 0.9 pu, unstable when every bus voltage stays below
/// 0.75 pu, unlabeled otherwise.
pub fn prelabel(sample: &TrajectorySample) -> Label {
    let horizon = sample.horizon();
    let window = (libm::round(SETTLING_WINDOW / sample.step) as usize).clamp(1, horizon);
    let tail = &sample.voltage.as_slice()[(horizon - window) * sample.bus_count()..];
    if tail.iter().all(|&v| v > STABLE_VOLTAGE) {
        Label::Stable
    } else if tail.iter().all(|&v| v < UNSTABLE_VOLTAGE) {
        Label::Unstable
    } else {
        Label::Unlabeled
    }
}

/// Number of samples `q = T/Δt` in an observation window of `window_seconds`.
pub fn window_length(window_seconds: f64, step: f64) -> Result<usize> {
    if !(window_seconds > 0.0) || !(step > 0.0) {
        return Err(Error::invalid("window and step must be positive"));
    }
    let ratio = window_seconds / step;
    let q = libm::round(ratio);
    if q < 1.0 || (ratio - q).abs() > 1e-9 * ratio.max(1.0) {
        return Err(Error::invalid(alloc::format!(
            "window {window_seconds} s is not a multiple of the {step} s step"
        )));
    }
    Ok(q as usize)
}

/// The `q × 3L` observation window starting at fault clearing. Row `t` is
/// `(U_1..U_L, P_1..P_L, Q_1..Q_L)` at step `t`; values are copied verbatim.
pub fn extract_window(sample: &TrajectorySample, window_seconds: f64, step: f64) -> Result<DenseArray> {
    if (step - sample.step).abs() > 1e-12 {
        return Err(Error::invalid("window step differs from the trajectory step"));
    }
    let q = window_length(window_seconds, step)?;
    let start = sample.clearing_index();
    let l = sample.bus_count();
    if start + q > sample.horizon() {
        return Err(Error::invalid(alloc::format!(
            "window of {q} steps from step {start} exceeds the {}-step horizon",
            sample.horizon()
        )));
    }
    let mut data = Vec::with_capacity(q * 3 * l);
    for t in start..start + q {
        data.extend_from_slice(sample.voltage.row_slice(t));
        data.extend_from_slice(sample.active.row_slice(t));
        data.extend_from_slice(sample.reactive.row_slice(t));
    }
    DenseArray::matrix(q, 3 * l, data)
}

/// Adds zero-mean Gaussian noise to every channel (one bus of one quantity)
/// with power equal to the channel's full-horizon mean power divided by
/// `10^(snr_db/10)`. Voltages are clipped at zero.
pub fn add_noise(sample: &TrajectorySample, snr_db: f64, seed: u64) -> Result<TrajectorySample> {
    if !snr_db.is_finite() {
        return Err(Error::invalid("SNR must be finite"));
    }
    let mut out = sample.clone();
    let mut r = rng::seeded(seed);
    let factor = libm::pow(10.0, snr_db / 10.0);
    let (h, l) = (sample.horizon(), sample.bus_count());
    for (k, m) in [&mut out.voltage, &mut out.active, &mut out.reactive].into_iter().enumerate() {
        let data = m.as_mut_slice();
        for b in 0..l {
            let power = (0..h).map(|t| data[t * l + b] * data[t * l + b]).sum::<f64>() / h as f64;
            let sigma = libm::sqrt(power / factor);
            for t in 0..h {
                let v = data[t * l + b] + sigma * rng::standard_normal(&mut r);
                data[t * l + b] = if k == 0 { v.max(0.0) } else { v };
            }
        }
    }
    Ok(out)
}

/// A flattened observation window with its label, row-major by time step.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WindowSample {
    pub id: usize,
    pub label: Label,
    pub origin: Origin,
    pub scenario_id: Option<usize>,
    pub features: Vec<f64>,
}

impl WindowSample {
    pub fn from_trajectory(sample: &TrajectorySample, window_seconds: f64) -> Result<Self> {
        let w = extract_window(sample, window_seconds, sample.step)?;
        Ok(Self {
            id: sample.id,
            label: sample.label,
            origin: sample.origin,
            scenario_id: Some(sample.scenario.id),
            features: w.into_vec(),
        })
    }
}

/// Per-feature min-max bounds mapping training extrema to `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Normalization {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Normalization {
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a [f64]>) -> Result<Self> {
        let mut it = rows.into_iter();
        let first = it.next().ok_or_else(|| Error::invalid("no rows to fit normalization"))?;
        let mut min = first.to_vec();
        let mut max = first.to_vec();
        for row in it {
            if row.len() != min.len() {
                return Err(Error::shape("rows differ in feature count"));
            }
            for ((lo, hi), &v) in min.iter_mut().zip(max.iter_mut()).zip(row) {
                *lo = lo.min(v);
                *hi = hi.max(v);
            }
        }
        Ok(Self { min, max })
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    /// Constant features map to 0.
    pub fn normalize(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(&v, (&lo, &hi))| if hi > lo { 2.0 * (v - lo) / (hi - lo) - 1.0 } else { 0.0 })
            .collect()
    }

    pub fn denormalize(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(&v, (&lo, &hi))| lo + (v + 1.0) * 0.5 * (hi - lo))
            .collect()
    }
}

/// Stratified random partition into train and test index lists (each sorted).
/// `ratio` is train size over test size. Every class is split within one
/// sample of the ratio, and the total within one sample of it.
pub fn split_indices<K: Copy + Eq>(keys: &[K], ratio: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(ratio > 0.0) || !ratio.is_finite() {
        return Err(Error::invalid("split ratio must be positive"));
    }
    if keys.is_empty() {
        return Err(Error::invalid("cannot split an empty dataset"));
    }
    let mut classes: Vec<K> = Vec::new();
    for k in keys {
        if !classes.contains(k) {
            classes.push(*k);
        }
    }
    let share = ratio / (1.0 + ratio);
    let members: Vec<Vec<usize>> = classes
        .iter()
        .map(|c| (0..keys.len()).filter(|&i| keys[i] == *c).collect())
        .collect();
    if members.iter().any(|m| m.len() < 2) {
        return Err(Error::invalid("every class needs at least two samples for a stratified split"));
    }
    let desired: Vec<f64> = members.iter().map(|m| m.len() as f64 * share).collect();
    let mut take: Vec<usize> = desired.iter().map(|d| libm::floor(*d) as usize).collect();
    let target = libm::round(keys.len() as f64 * share) as usize;
    let mut remaining = target - take.iter().sum::<usize>();
    while remaining > 0 {
        let best = (0..take.len())
            .filter(|&c| (take[c] as f64) < desired[c])
            .max_by(|&a, &b| {
                let fa = desired[a] - take[a] as f64;
                let fb = desired[b] - take[b] as f64;
                fa.total_cmp(&fb).then(b.cmp(&a))
            })
            .expect("rounded total never exceeds the sum of ceilings");
        take[best] += 1;
        remaining -= 1;
    }
    let mut r = rng::seeded(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (m, &n) in members.iter().zip(&take) {
        let mut idx = m.clone();
        rng::shuffle(&mut r, &mut idx);
        train.extend_from_slice(&idx[..n]);
        test.extend_from_slice(&idx[n..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Windows plus a train/test partition and training-set normalization bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    /// Window length in steps.
    pub q: usize,
    /// Features per step (3L).
    pub channels: usize,
    pub samples: Vec<WindowSample>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub normalization: Normalization,
}

impl LabeledDataset {
    /// Builds the dataset, fitting normalization on the training indices only.
    pub fn new(
        q: usize,
        channels: usize,
        samples: Vec<WindowSample>,
        train: Vec<usize>,
        test: Vec<usize>,
    ) -> Result<Self> {
        let dim = q * channels;
        if samples.iter().any(|s| s.features.len() != dim) {
            return Err(Error::shape(alloc::format!("every window must hold {dim} features")));
        }
        let mut seen = vec![false; samples.len()];
        for &i in train.iter().chain(&test) {
            if i >= samples.len() || seen[i] {
                return Err(Error::invalid("partition indices must be distinct and in range"));
            }
            seen[i] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::invalid("partition must cover every sample"));
        }
        let normalization = Normalization::fit(train.iter().map(|&i| samples[i].features.as_slice()))?;
        Ok(Self {
            q,
            channels,
            samples,
            train,
            test,
            normalization,
        })
    }

    /// Stratified split by label, then [`LabeledDataset::new`].
    pub fn split(q: usize, channels: usize, samples: Vec<WindowSample>, ratio: f64, seed: u64) -> Result<Self> {
        let keys: Vec<Label> = samples.iter().map(|s| s.label).collect();
        let (train, test) = split_indices(&keys, ratio, seed)?;
        Self::new(q, channels, samples, train, test)
    }

    pub fn feature_dim(&self) -> usize {
        self.q * self.channels
    }

    pub fn train_samples(&self) -> impl Iterator<Item = &WindowSample> {
        self.train.iter().map(move |&i| &self.samples[i])
    }

    pub fn test_samples(&self) -> impl Iterator<Item = &WindowSample> {
        self.test.iter().map(move |&i| &self.samples[i])
    }

    /// Fails when any test sample is not a simulated one.
    pub fn check_test_purity(&self) -> Result<()> {
        match self.test_samples().find(|s| s.origin != Origin::Simulated) {
            Some(s) => Err(Error::invalid(alloc::format!(
                "test partition contains generated sample {}",
                s.id
            ))),
            None => Ok(()),
        }
    }
}
