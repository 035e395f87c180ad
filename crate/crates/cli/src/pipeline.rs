//! The pipeline stages. Each stage reads its inputs from and writes its
//! artifacts to one output directory under fixed file names.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};

use dlban_core::augment::{
    self, fid, generate_counts, median_distance, mmd, train_gan, wasserstein_distance, Bandwidth, GenerativeModel,
};
use dlban_core::classifier::{self, design_matrix, predict_partition, train_classifier, verdict, Assessment, Variant};
use dlban_core::datagen::{
    add_noise, build_scenario_grid, extract_window, prelabel, simulate_trajectory, window_length, Label,
    LabeledDataset, Stability, TrajectorySample, WindowSample,
};
use dlban_core::labeling::{cop_kmeans_fit, resolve_labels, sfcm_fit, silhouette, ClusterAssignment};
use dlban_core::loss::GanLossMode;
use dlban_core::metrics::{evaluate, scalar_metrics, ConfusionCounts, EvalReport, ScalarMetrics};
use dlban_core::rng::derive_seed;
use dlban_core::DenseArray;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{classifier_checkpoint, gan_checkpoint, load_classifier, Checkpoint};
use crate::config::{stream, PipelineConfig};
use crate::error::{CliError, Result};
use crate::io;

/// Artifact file names inside the output directory.
pub mod files {
    pub const SCENARIOS: &str = "scenarios.csv";
    pub const TRAJECTORIES: &str = "trajectories.csv";
    pub const WINDOWS: &str = "windows.csv";
    pub const LABELED: &str = "labeled";
    pub const LABEL_REPORT: &str = "label_report.json";
    pub const COUNTS_REPORT: &str = "eval_counts.json";
}

/// Resolved configuration plus the artifact directory.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: PipelineConfig,
    pub out: PathBuf,
}

impl Context {
    /// Validates the config and creates the output directory.
    pub fn new(config: PipelineConfig, out: Option<PathBuf>) -> Result<Self> {
        config.validate()?;
        let out = out.unwrap_or_else(|| config.out_dir.clone());
        std::fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
        Ok(Self { config, out })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn input(&self, name: &str, stage: &'static str) -> Result<PathBuf> {
        let p = self.path(name);
        if !p.exists() {
            return Err(CliError::MissingArtifact { path: p, stage });
        }
        Ok(p)
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let path = self.path(name);
        let mut text = serde_json::to_string_pretty(value).expect("reports serialize");
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))
    }

    fn trajectories(&self) -> Result<Vec<TrajectorySample>> {
        let scen = self.input(files::SCENARIOS, "generate")?;
        let traj = self.input(files::TRAJECTORIES, "generate")?;
        io::read_trajectories(&scen, &traj)
    }

    /// Loads `<stem>.csv` with its partition file `<stem>_partition.csv`.
    pub fn load_dataset(&self, stem: &str) -> Result<LabeledDataset> {
        let stage = if stem == files::LABELED { "label" } else { "augment" };
        let table = io::read_windows(&self.input(&format!("{stem}.csv"), stage)?)?;
        let (train, test) = io::read_partition(&self.input(&format!("{stem}_partition.csv"), stage)?, &table.samples)?;
        Ok(LabeledDataset::new(table.q, table.channels, table.samples, train, test)?)
    }

    fn write_dataset(&self, stem: &str, d: &LabeledDataset) -> Result<()> {
        io::write_windows(&self.path(&format!("{stem}.csv")), d.q, d.channels, &d.samples)?;
        io::write_partition(&self.path(&format!("{stem}_partition.csv")), &d.samples, &d.train, &d.test)
    }

    fn model_path(&self, variant: Variant, dataset: &str) -> PathBuf {
        self.path(&format!("model_{}_{dataset}.ckpt", variant.as_str()))
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Label-state counts of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub samples: usize,
    pub stable: usize,
    pub unstable: usize,
    pub unlabeled: usize,
}

impl LabelCounts {
    fn of<'a>(labels: impl IntoIterator<Item = &'a Label>) -> Self {
        let mut c = LabelCounts { samples: 0, stable: 0, unstable: 0, unlabeled: 0 };
        for l in labels {
            c.samples += 1;
            match l {
                Label::Stable => c.stable += 1,
                Label::Unstable => c.unstable += 1,
                Label::Unlabeled => c.unlabeled += 1,
            }
        }
        c
    }
}

impl fmt::Display for LabelCounts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "samples={} stable={} unstable={} unlabeled={}",
            self.samples, self.stable, self.unstable, self.unlabeled
        )
    }
}

/// Simulates the scenario grid, applies prelabels and writes the scenario
/// table, the trajectories and the windows.
pub fn cmd_generate(ctx: &Context) -> Result<LabelCounts> {
    let cfg = &ctx.config;
    let grid = build_scenario_grid(&cfg.grid())?;
    let sim = cfg.simulation();
    let mut samples = Vec::with_capacity(grid.len());
    for scenario in &grid {
        let mut s = simulate_trajectory(scenario, &sim)?;
        io::quantize_trajectory(&mut s);
        s.label = prelabel(&s);
        samples.push(s);
    }
    let windows = samples
        .iter()
        .map(|s| WindowSample::from_trajectory(s, cfg.classifier.window_seconds))
        .collect::<dlban_core::Result<Vec<_>>>()?;
    let q = window_length(cfg.classifier.window_seconds, cfg.data.step)?;
    io::write_trajectories(&ctx.path(files::SCENARIOS), &ctx.path(files::TRAJECTORIES), &samples)?;
    io::write_windows(&ctx.path(files::WINDOWS), q, 3 * cfg.data.bus_count, &windows)?;
    Ok(LabelCounts::of(windows.iter().map(|w| &w.label)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringSummary {
    pub silhouette: f64,
    pub iterations: usize,
    pub final_objective: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelReport {
    pub before: LabelCounts,
    pub after: LabelCounts,
    /// Silhouette of the prelabels over the prelabeled samples.
    pub prelabel_silhouette: Option<f64>,
    /// `None` when nothing was left to label.
    pub sfcm: Option<ClusteringSummary>,
    pub cop_kmeans: Option<ClusteringSummary>,
    /// Class assigned to each SFCM cluster.
    pub cluster_class: Vec<Stability>,
    /// Agreement of the resolved labels with the simulator outcome, over
    /// the samples that had no prelabel.
    pub resolved_accuracy: Option<f64>,
    pub train: usize,
    pub test: usize,
}

impl fmt::Display for LabelReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "before {}", self.before)?;
        writeln!(f, "after {}", self.after)?;
        writeln!(
            f,
            "sfcm_silhouette={} cop_kmeans_silhouette={} resolved_accuracy={}",
            fmt_opt(self.sfcm.as_ref().map(|s| s.silhouette)),
            fmt_opt(self.cop_kmeans.as_ref().map(|s| s.silhouette)),
            fmt_opt(self.resolved_accuracy)
        )?;
        write!(f, "train={} test={}", self.train, self.test)
    }
}

fn summarize(features: &DenseArray, a: &ClusterAssignment) -> Result<ClusteringSummary> {
    Ok(ClusteringSummary {
        silhouette: silhouette(features, &a.labels)?,
        iterations: a.iterations,
        final_objective: a.final_objective(),
    })
}

fn rows_of(m: impl ExactSizeIterator<Item = Vec<f64>>, cols: usize) -> Result<DenseArray> {
    let n = m.len();
    Ok(DenseArray::matrix(n, cols, m.flatten().collect())?)
}

/// Completes the label column with SFCM on full-horizon voltage
/// trajectories, runs COP-k-means for comparison and splits the dataset.
pub fn cmd_label(ctx: &Context) -> Result<LabelReport> {
    let cfg = &ctx.config;
    let table = io::read_windows(&ctx.input(files::WINDOWS, "generate")?)?;
    let trajectories = ctx.trajectories()?;
    let by_id: HashMap<usize, &TrajectorySample> = trajectories.iter().map(|t| (t.id, t)).collect();
    let mut samples = table.samples;
    let voltage: Vec<&[f64]> = samples
        .iter()
        .map(|s| {
            by_id
                .get(&s.id)
                .map(|t| t.voltage.as_slice())
                .ok_or_else(|| CliError::Config(format!("sample {} has no trajectory", s.id)))
        })
        .collect::<Result<_>>()?;
    let width = voltage.first().map_or(0, |v| v.len());
    if voltage.iter().any(|v| v.len() != width) {
        return Err(CliError::Config("trajectories differ in length".into()));
    }
    let features = rows_of(voltage.iter().map(|v| v.to_vec()), width)?;
    let known: Vec<Option<Stability>> = samples.iter().map(|s| s.label.known()).collect();
    let before = LabelCounts::of(samples.iter().map(|s| &s.label));

    let labeled_idx: Vec<usize> = (0..samples.len()).filter(|&i| known[i].is_some()).collect();
    let prelabel_silhouette = {
        let sub = rows_of(labeled_idx.iter().map(|&i| features.row_slice(i).to_vec()), width)?;
        let lab: Vec<usize> = labeled_idx.iter().map(|&i| known[i].expect("labeled").index()).collect();
        silhouette(&sub, &lab).ok()
    };

    let (mut sfcm, mut cop, mut cluster_class, mut resolved_accuracy) = (None, None, Vec::new(), None);
    if before.unlabeled > 0 {
        let known_idx: Vec<Option<usize>> = known.iter().map(|k| k.map(Stability::index)).collect();
        let (_, assignment) = sfcm_fit(&features, &known_idx, &cfg.sfcm())?;
        let cop_assignment = cop_kmeans_fit(&features, &known_idx, cfg.labeling.clusters, cfg.derived_seed(stream::COP))?;
        sfcm = Some(summarize(&features, &assignment)?);
        cop = Some(summarize(&features, &cop_assignment)?);
        let resolution = resolve_labels(&assignment, &known)?;
        let (mut hits, mut total) = (0usize, 0usize);
        for (i, s) in samples.iter_mut().enumerate() {
            if known[i].is_none() {
                if let Some(truth) = by_id[&s.id].truth {
                    total += 1;
                    hits += usize::from(truth.outcome == resolution.labels[i]);
                }
            }
            s.label = resolution.labels[i].into();
        }
        cluster_class = resolution.cluster_class;
        resolved_accuracy = (total > 0).then(|| hits as f64 / total as f64);
    }
    let dataset = LabeledDataset::split(
        table.q,
        table.channels,
        samples,
        cfg.data.split_ratio,
        cfg.derived_seed(stream::SPLIT),
    )?;
    ctx.write_dataset(files::LABELED, &dataset)?;
    let report = LabelReport {
        before,
        after: LabelCounts::of(dataset.samples.iter().map(|s| &s.label)),
        prelabel_silhouette,
        sfcm,
        cop_kmeans: cop,
        cluster_class,
        resolved_accuracy,
        train: dataset.train.len(),
        test: dataset.test.len(),
    };
    ctx.write_json(files::LABEL_REPORT, &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fidelity {
    pub wd: f64,
    pub mmd: f64,
    pub fid: f64,
}

impl Fidelity {
    fn mean(items: &[Fidelity]) -> Fidelity {
        let n = items.len() as f64;
        Fidelity {
            wd: items.iter().map(|f| f.wd).sum::<f64>() / n,
            mmd: items.iter().map(|f| f.mmd).sum::<f64>() / n,
            fid: items.iter().map(|f| f.fid).sum::<f64>() / n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GanRun {
    pub run: usize,
    pub seed: u64,
    pub iterations: usize,
    /// Untrained generator with the same initialization.
    pub initial: Fidelity,
    #[serde(rename = "final")]
    pub trained: Fidelity,
}

/// Fidelity of generated against held-out real windows, in the normalized cube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentReport {
    pub loss: GanLossMode,
    /// Fixed RBF bandwidth: median pairwise distance of the held-out windows.
    pub mmd_bandwidth: f64,
    pub runs: Vec<GanRun>,
    pub mean_initial: Fidelity,
    pub mean_final: Fidelity,
    pub original_samples: usize,
    pub final_samples: usize,
    pub dataset: String,
}

impl fmt::Display for AugmentReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (a, b) = (self.mean_initial, self.mean_final);
        writeln!(f, "runs={} dataset={} samples={}->{}", self.runs.len(), self.dataset, self.original_samples, self.final_samples)?;
        write!(f, "wd={}->{} mmd={}->{} fid={}->{}", a.wd, b.wd, a.mmd, b.mmd, a.fid, b.fid)
    }
}

/// File prefix and dataset stem of a loss mode's artifacts.
pub fn augment_names(loss: GanLossMode) -> (&'static str, &'static str) {
    match loss {
        GanLossMode::LeastSquares => ("gan", "augmented"),
        GanLossMode::CrossEntropy => ("cgan", "cgan_augmented"),
    }
}

fn fidelity(model: &GenerativeModel, real: &DenseArray, counts: [usize; 2], sigma: f64, seed: u64) -> Result<Fidelity> {
    let rows = generate_counts(model, counts, seed)?;
    let fake = rows_of(rows.into_iter().map(|(_, r)| r), real.cols())?;
    Ok(Fidelity {
        wd: wasserstein_distance(real, &fake)?,
        mmd: mmd(real, &fake, Bandwidth::Fixed(sigma))?,
        fid: fid(real, &fake)?,
    })
}

/// Trains the conditional GAN `runs` times, reports fidelity against the
/// test partition and writes the augmented dataset of the first run.
pub fn cmd_augment(ctx: &Context, loss: Option<GanLossMode>) -> Result<AugmentReport> {
    let cfg = &ctx.config;
    let loss = loss.unwrap_or(cfg.augmentation.loss);
    let (prefix, stem) = augment_names(loss);
    let original = ctx.load_dataset(files::LABELED)?;
    original.check_test_purity().map_err(|e| CliError::Purity(e.to_string()))?;
    let (x, labels) = design_matrix(&original, &original.train)?;
    let (real, test_labels) = design_matrix(&original, &original.test)?;
    let counts = [Stability::Unstable, Stability::Stable].map(|c| test_labels.iter().filter(|&&l| l == c).count());
    let sigma = median_distance(&real);

    let mut runs = Vec::with_capacity(cfg.augmentation.runs);
    let mut history = Vec::new();
    let mut snapshots = Vec::new();
    let mut first = None;
    for run in 0..cfg.augmentation.runs {
        let gan_cfg = cfg.gan(loss, run);
        let eval_seed = derive_seed(gan_cfg.seed, 1000);
        let fresh = GenerativeModel::new(x.cols(), &gan_cfg)?;
        let model = train_gan(&x, &labels, &gan_cfg)?;
        runs.push(GanRun {
            run,
            seed: gan_cfg.seed,
            iterations: model.iterations_trained,
            initial: fidelity(&fresh, &real, counts, sigma, eval_seed)?,
            trained: fidelity(&model, &real, counts, sigma, eval_seed)?,
        });
        let h = &model.history;
        for (i, (d, g)) in h.discriminator_loss.iter().zip(&h.generator_loss).enumerate() {
            history.push([run.to_string(), (i + 1).to_string(), d.to_string(), g.to_string()]);
        }
        for s in &h.snapshots {
            snapshots.push([run.to_string(), s.iteration.to_string(), s.wd.to_string(), s.mmd.to_string(), s.fid.to_string()]);
        }
        if first.is_none() {
            first = Some(model);
        }
    }
    let model = first.expect("at least one run");
    let target = cfg.target_total(original.samples.len());
    let augmented = augment::augment(&original, &model, target, cfg.derived_seed(stream::GENERATE))?;
    ctx.write_dataset(stem, &augmented)?;
    gan_checkpoint(&model, &original.normalization).save(&ctx.path(&format!("{prefix}.ckpt")))?;
    io::write_table(
        &ctx.path(&format!("{prefix}_history.csv")),
        &["run", "iteration", "discriminator_loss", "generator_loss"],
        history,
    )?;
    io::write_table(
        &ctx.path(&format!("{prefix}_fidelity.csv")),
        &["run", "iteration", "wd", "mmd", "fid"],
        snapshots,
    )?;
    let report = AugmentReport {
        loss,
        mmd_bandwidth: sigma,
        mean_initial: Fidelity::mean(&runs.iter().map(|r| r.initial).collect::<Vec<_>>()),
        mean_final: Fidelity::mean(&runs.iter().map(|r| r.trained).collect::<Vec<_>>()),
        runs,
        original_samples: original.samples.len(),
        final_samples: augmented.samples.len(),
        dataset: stem.to_string(),
    };
    ctx.write_json(&format!("{prefix}_report.json"), &report)?;
    Ok(report)
}

/// Which model and dataset a stage works on.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub variant: Option<Variant>,
    /// Dataset stem, e.g. `labeled` or `augmented`.
    pub dataset: String,
}

impl Default for Selection {
    fn default() -> Self {
        Self { variant: None, dataset: "augmented".into() }
    }
}

impl Selection {
    fn variant(&self, cfg: &PipelineConfig) -> Variant {
        self.variant.unwrap_or(cfg.classifier.variant)
    }

    fn tag(&self, cfg: &PipelineConfig) -> String {
        format!("{}_{}", self.variant(cfg).as_str(), self.dataset)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub variant: Variant,
    pub dataset: String,
    pub epochs: usize,
    pub final_loss: Option<f64>,
    pub train_accuracy: Option<f64>,
    pub test_accuracy: Option<f64>,
}

impl fmt::Display for TrainSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "variant={} dataset={} epochs={} loss={} train_accuracy={} test_accuracy={}",
            self.variant.as_str(),
            self.dataset,
            self.epochs,
            fmt_opt(self.final_loss),
            fmt_opt(self.train_accuracy),
            fmt_opt(self.test_accuracy)
        )
    }
}

/// Trains the selected variant and writes its checkpoint and per-epoch curve.
pub fn cmd_train(ctx: &Context, sel: &Selection, epochs: Option<usize>) -> Result<TrainSummary> {
    let cfg = &ctx.config;
    let variant = sel.variant(cfg);
    let data = ctx.load_dataset(&sel.dataset)?;
    data.check_test_purity().map_err(|e| CliError::Purity(e.to_string()))?;
    let shape = cfg.shape(variant, data.q, data.channels);
    let trained = train_classifier(&data, shape, &cfg.classifier_training(epochs))?;
    classifier_checkpoint(&trained.model, &data.normalization).save(&ctx.model_path(variant, &sel.dataset))?;
    io::write_table(
        &ctx.path(&format!("curve_{}.csv", sel.tag(cfg))),
        &["epoch", "loss", "train_accuracy", "test_accuracy"],
        trained.curve.iter().map(|r| {
            [r.epoch.to_string(), r.loss.to_string(), r.train_accuracy.to_string(), fmt_opt(r.test_accuracy)]
        }),
    )?;
    let last = trained.curve.last();
    Ok(TrainSummary {
        variant,
        dataset: sel.dataset.clone(),
        epochs: trained.curve.len(),
        final_loss: last.map(|r| r.loss),
        train_accuracy: last.map(|r| r.train_accuracy),
        test_accuracy: last.and_then(|r| r.test_accuracy),
    })
}

fn load_model(ctx: &Context, sel: &Selection) -> Result<(classifier::SequenceClassifier, dlban_core::datagen::Normalization)> {
    let path = ctx.model_path(sel.variant(&ctx.config), &sel.dataset);
    if !path.exists() {
        return Err(CliError::MissingArtifact { path, stage: "train" });
    }
    load_checkpoint_file(&path)
}

/// Loads a classifier checkpoint from an explicit path.
pub fn load_checkpoint_file(path: &Path) -> Result<(classifier::SequenceClassifier, dlban_core::datagen::Normalization)> {
    let ck = Checkpoint::load(path)?;
    load_classifier(&ck).map_err(|source| CliError::Checkpoint { path: path.to_path_buf(), source })
}

fn check_model_fits(model: &classifier::SequenceClassifier, q: usize, m: usize) -> Result<()> {
    if (model.shape.q, model.shape.input_dim) != (q, m) {
        return Err(dlban_core::Error::Shape {
            node: None,
            detail: format!(
                "checkpoint expects q={} m={}, data has q={q} m={m}",
                model.shape.q, model.shape.input_dim
            ),
        }
        .into());
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutcome {
    pub report: EvalReport,
    /// Mean per-window assessment latency, measured on the test windows.
    pub measured_latency_ms: f64,
}

impl fmt::Display for EvalOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (c, m) = (&self.report.counts, &self.report.metrics);
        writeln!(f, "tp={} fn={} fp={} tn={}", c.tp, c.fn_, c.fp, c.tn)?;
        writeln!(
            f,
            "accuracy={} precision={} recall={} f1={} mcc={} auc={}",
            m.accuracy, m.precision, m.recall, m.f1, m.mcc, self.report.auc
        )?;
        write!(
            f,
            "misdetection_rate={} false_alarm_rate={} mean_latency_ms={}",
            m.misdetection_rate, m.false_alarm_rate, self.measured_latency_ms
        )
    }
}

/// Evaluates the selected checkpoint on the test partition. Timing varies
/// between runs, so latency enters the JSON report only when `timing` is set.
pub fn cmd_eval(ctx: &Context, sel: &Selection, timing: bool) -> Result<EvalOutcome> {
    let (model, norm) = load_model(ctx, sel)?;
    let mut data = ctx.load_dataset(&sel.dataset)?;
    data.check_test_purity().map_err(|e| CliError::Purity(e.to_string()))?;
    check_model_fits(&model, data.q, data.channels)?;
    data.normalization = norm;
    let (truth, predicted, scores) = predict_partition(&model, &data, &data.test)?;
    let mut report = evaluate(&truth, &predicted, &scores)?;

    let mut total = 0.0;
    for s in data.test_samples() {
        let window = DenseArray::matrix(data.q, data.channels, s.features.clone())?;
        total += classifier::assess(&model, &window, &data.normalization)?.latency_ms;
    }
    let measured = total / data.test.len() as f64;
    if timing {
        report.mean_latency_ms = Some(measured);
    }
    let tag = sel.tag(&ctx.config);
    ctx.write_json(&format!("eval_{tag}.json"), &report)?;
    io::write_table(
        &ctx.path(&format!("roc_{tag}.csv")),
        &["fpr", "tpr"],
        report.roc.iter().map(|p| [p.fpr.to_string(), p.tpr.to_string()]),
    )?;
    Ok(EvalOutcome { report, measured_latency_ms: measured })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountsReport {
    pub counts: ConfusionCounts,
    pub metrics: ScalarMetrics,
}

impl fmt::Display for CountsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = &self.metrics;
        write!(
            f,
            "accuracy={} precision={} recall={} f1={} mcc={} misdetection_rate={} false_alarm_rate={}",
            m.accuracy, m.precision, m.recall, m.f1, m.mcc, m.misdetection_rate, m.false_alarm_rate
        )
    }
}

/// Scalar metrics of confusion counts read from a JSON file
/// (`{"tp": .., "fp": .., "tn": .., "fn": ..}`).
pub fn cmd_eval_counts(ctx: &Context, counts_path: &Path) -> Result<CountsReport> {
    let text = std::fs::read_to_string(counts_path).map_err(|e| CliError::io(counts_path, e))?;
    let counts: ConfusionCounts = serde_json::from_str(&text)
        .map_err(|e| CliError::parse(counts_path, e.line() as u64, e.column(), e.to_string()))?;
    let report = CountsReport { metrics: scalar_metrics(&counts)?, counts };
    ctx.write_json(files::COUNTS_REPORT, &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub window_ms: f64,
    pub q: usize,
    pub epochs: usize,
    pub test_accuracy: f64,
    pub mcc: f64,
    pub misdetection_rate: f64,
    pub false_alarm_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub variant: Variant,
    pub rows: Vec<SweepRow>,
    /// Windows that do not fit in the trajectories.
    pub skipped_ms: Vec<f64>,
}

impl fmt::Display for SweepReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, r) in self.rows.iter().enumerate() {
            if k > 0 {
                writeln!(f)?;
            }
            write!(f, "window_ms={} q={} test_accuracy={} mcc={}", r.window_ms, r.q, r.test_accuracy, r.mcc)?;
        }
        for t in &self.skipped_ms {
            write!(f, "\nskipped window_ms={t}")?;
        }
        Ok(())
    }
}

/// Windows re-extracted at `window_seconds` for every sample of `base`,
/// keeping labels and partition.
fn reextract(base: &LabeledDataset, by_id: &HashMap<usize, &TrajectorySample>, window_seconds: f64, step: f64) -> Result<LabeledDataset> {
    let mut samples = Vec::with_capacity(base.samples.len());
    for s in &base.samples {
        let t = by_id
            .get(&s.id)
            .ok_or_else(|| CliError::Config(format!("sample {} has no trajectory", s.id)))?;
        let w = extract_window(t, window_seconds, step)?;
        samples.push(WindowSample { features: w.into_vec(), ..s.clone() });
    }
    let q = window_length(window_seconds, step)?;
    Ok(LabeledDataset::new(q, base.channels, samples, base.train.clone(), base.test.clone())?)
}

/// Retrains the selected variant on the original labeled dataset for every
/// observation window of the sweep and records test metrics.
pub fn cmd_sweep_otw(ctx: &Context, variant: Option<Variant>, full_budget: bool) -> Result<SweepReport> {
    let cfg = &ctx.config;
    let variant = variant.unwrap_or(cfg.classifier.variant);
    let base = ctx.load_dataset(files::LABELED)?;
    base.check_test_purity().map_err(|e| CliError::Purity(e.to_string()))?;
    let trajectories = ctx.trajectories()?;
    let by_id: HashMap<usize, &TrajectorySample> = trajectories.iter().map(|t| (t.id, t)).collect();
    let step = cfg.data.step;
    let epochs = if full_budget { None } else { cfg.evaluation.sweep_epochs };
    let train_cfg = cfg.classifier_training(epochs);

    let mut rows = Vec::new();
    let mut skipped_ms = Vec::new();
    for &ms in &cfg.evaluation.otw_ms {
        let seconds = ms / 1000.0;
        let q = window_length(seconds, step)?;
        let fits = base.samples.iter().all(|s| {
            by_id.get(&s.id).is_some_and(|t| t.clearing_index() + q <= t.horizon())
        });
        if !fits {
            eprintln!("warning: skipping {ms} ms window, it runs past the trajectory horizon");
            skipped_ms.push(ms);
            continue;
        }
        let data = reextract(&base, &by_id, seconds, step)?;
        let trained = train_classifier(&data, cfg.shape(variant, q, data.channels), &train_cfg)?;
        let (truth, predicted, scores) = predict_partition(&trained.model, &data, &data.test)?;
        let r = evaluate(&truth, &predicted, &scores)?;
        rows.push(SweepRow {
            window_ms: ms,
            q,
            epochs: trained.curve.len(),
            test_accuracy: r.metrics.accuracy,
            mcc: r.metrics.mcc,
            misdetection_rate: r.metrics.misdetection_rate,
            false_alarm_rate: r.metrics.false_alarm_rate,
        });
    }
    io::write_table(
        &ctx.path(&format!("sweep_otw_{}.csv", variant.as_str())),
        &["window_ms", "q", "epochs", "test_accuracy", "mcc", "misdetection_rate", "false_alarm_rate"],
        rows.iter().map(|r| {
            [
                r.window_ms.to_string(),
                r.q.to_string(),
                r.epochs.to_string(),
                r.test_accuracy.to_string(),
                r.mcc.to_string(),
                r.misdetection_rate.to_string(),
                r.false_alarm_rate.to_string(),
            ]
        }),
    )?;
    Ok(SweepReport { variant, rows, skipped_ms })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseRow {
    /// `None` for the clean reference.
    pub snr_db: Option<f64>,
    pub accuracy: f64,
    pub mcc: f64,
    pub f1: f64,
    pub auc: f64,
    pub misdetection_rate: f64,
    pub false_alarm_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseReport {
    pub clean: NoiseRow,
    pub rows: Vec<NoiseRow>,
}

impl fmt::Display for NoiseReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let line = |r: &NoiseRow| {
            format!(
                "snr_db={} accuracy={} mcc={} f1={} auc={}",
                r.snr_db.map_or("clean".to_string(), |s| s.to_string()),
                r.accuracy,
                r.mcc,
                r.f1,
                r.auc
            )
        };
        write!(f, "{}", line(&self.clean))?;
        for r in &self.rows {
            write!(f, "\n{}", line(r))?;
        }
        Ok(())
    }
}

fn noise_row(
    model: &classifier::SequenceClassifier,
    norm: &dlban_core::datagen::Normalization,
    windows: &[Vec<f64>],
    truth: &[Stability],
    snr_db: Option<f64>,
) -> Result<NoiseRow> {
    let rows = rows_of(windows.iter().map(|w| norm.normalize(w)), norm.dim())?;
    let scores = model.predict_stable(&rows)?;
    let predicted: Vec<Stability> = scores.iter().map(|&p| verdict(p)).collect();
    let r = evaluate(truth, &predicted, &scores)?;
    Ok(NoiseRow {
        snr_db,
        accuracy: r.metrics.accuracy,
        mcc: r.metrics.mcc,
        f1: r.metrics.f1,
        auc: r.auc,
        misdetection_rate: r.metrics.misdetection_rate,
        false_alarm_rate: r.metrics.false_alarm_rate,
    })
}

/// Perturbs the full-horizon test trajectories at each SNR, re-extracts the
/// windows and evaluates the selected checkpoint.
pub fn cmd_noise(ctx: &Context, sel: &Selection) -> Result<NoiseReport> {
    let cfg = &ctx.config;
    let (model, norm) = load_model(ctx, sel)?;
    let data = ctx.load_dataset(&sel.dataset)?;
    data.check_test_purity().map_err(|e| CliError::Purity(e.to_string()))?;
    check_model_fits(&model, data.q, data.channels)?;
    let trajectories = ctx.trajectories()?;
    let by_id: HashMap<usize, &TrajectorySample> = trajectories.iter().map(|t| (t.id, t)).collect();
    let step = cfg.data.step;
    let seconds = data.q as f64 * step;
    let base_seed = cfg.derived_seed(stream::NOISE);

    let mut clean = Vec::with_capacity(data.test.len());
    let mut truth = Vec::with_capacity(data.test.len());
    let mut tests = Vec::with_capacity(data.test.len());
    for s in data.test_samples() {
        let t = *by_id
            .get(&s.id)
            .ok_or_else(|| CliError::Config(format!("sample {} has no trajectory", s.id)))?;
        clean.push(extract_window(t, seconds, step)?.into_vec());
        truth.push(s.label.known().ok_or_else(|| CliError::Config(format!("test sample {} is unlabeled", s.id)))?);
        tests.push(t);
    }
    let clean_row = noise_row(&model, &norm, &clean, &truth, None)?;
    let mut rows = Vec::with_capacity(cfg.evaluation.snr_db.len());
    for &snr in &cfg.evaluation.snr_db {
        let windows = tests
            .iter()
            .map(|t| Ok(extract_window(&add_noise(t, snr, derive_seed(base_seed, t.id as u64))?, seconds, step)?.into_vec()))
            .collect::<Result<Vec<_>>>()?;
        rows.push(noise_row(&model, &norm, &windows, &truth, Some(snr))?);
    }
    let tag = sel.tag(cfg);
    io::write_table(
        &ctx.path(&format!("noise_{tag}.csv")),
        &["snr_db", "accuracy", "mcc", "f1", "auc", "misdetection_rate", "false_alarm_rate"],
        rows.iter().map(|r| {
            [
                fmt_opt(r.snr_db),
                r.accuracy.to_string(),
                r.mcc.to_string(),
                r.f1.to_string(),
                r.auc.to_string(),
                r.misdetection_rate.to_string(),
                r.false_alarm_rate.to_string(),
            ]
        }),
    )?;
    let report = NoiseReport { clean: clean_row, rows };
    ctx.write_json(&format!("noise_{tag}.json"), &report)?;
    Ok(report)
}

/// Formats an assessment as one `key=value` line.
pub fn assessment_line(a: &Assessment) -> String {
    format!(
        "verdict={} p_stable={} p_unstable={} latency_ms={}",
        a.verdict.as_str(),
        a.probabilities[1],
        a.probabilities[0],
        a.latency_ms
    )
}

/// Assesses one raw window file with the selected checkpoint, or with the
/// checkpoint at `model` when given.
pub fn cmd_assess(ctx: &Context, sel: &Selection, model: Option<&Path>, window: &Path) -> Result<Assessment> {
    let (clf, norm) = match model {
        Some(p) => load_checkpoint_file(p)?,
        None => load_model(ctx, sel)?,
    };
    let w = io::read_window_file(window)?;
    let (q, m) = w.dims2();
    if (q, m) != (clf.shape.q, clf.shape.input_dim) {
        return Err(CliError::parse(
            window,
            0,
            0,
            format!("window is {q}×{m}, the model expects {}×{}", clf.shape.q, clf.shape.input_dim),
        ));
    }
    Ok(classifier::assess(&clf, &w, &norm)?)
}
