//! Pipeline configuration. Every field has a default, so `{}` is a valid
//! config file; unknown keys are rejected.

use std::path::{Path, PathBuf};

use dlban_core::augment::GanTrainConfig;
use dlban_core::classifier::{ClassifierShape, ClassifierTrainConfig, Variant};
use dlban_core::datagen::{GridConfig, SimulationConfig};
use dlban_core::labeling::SfcmConfig;
use dlban_core::loss::GanLossMode;
use dlban_core::rng::derive_seed;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Per-stage seed streams derived from the global seed.
pub mod stream {
    pub const GRID: u64 = 10;
    pub const SPLIT: u64 = 11;
    pub const SFCM: u64 = 12;
    pub const COP: u64 = 13;
    pub const GAN: u64 = 20;
    pub const GENERATE: u64 = 30;
    pub const CLASSIFIER: u64 = 40;
    pub const NOISE: u64 = 50;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Artifact directory; `--out` overrides it.
    pub out_dir: PathBuf,
    pub data: DataConfig,
    pub labeling: LabelingConfig,
    pub augmentation: AugmentationConfig,
    pub classifier: ClassifierConfig,
    pub evaluation: EvaluationConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 2022,
            out_dir: PathBuf::from("out"),
            data: DataConfig::default(),
            labeling: LabelingConfig::default(),
            augmentation: AugmentationConfig::default(),
            classifier: ClassifierConfig::default(),
            evaluation: EvaluationConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Load buses `L`.
    pub bus_count: usize,
    /// Sampling step `Δt` in seconds.
    pub step: f64,
    /// Trajectory length in steps.
    pub horizon: usize,
    /// Faulted lines in the scenario grid.
    pub line_count: usize,
    /// Clearing times per fault.
    pub clearing_time_count: usize,
    /// Train:test ratio of the stratified split.
    pub split_ratio: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        let sim = SimulationConfig::default();
        let grid = GridConfig::default();
        Self {
            bus_count: sim.bus_count,
            step: sim.step,
            horizon: sim.horizon,
            line_count: grid.line_count,
            clearing_time_count: grid.clearing_time_count,
            split_ratio: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelingConfig {
    pub clusters: usize,
    pub alpha: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LabelingConfig {
    fn default() -> Self {
        let s = SfcmConfig::default();
        Self {
            clusters: s.clusters,
            alpha: s.alpha,
            tol: s.tol,
            max_iter: s.max_iter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentationConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub k: usize,
    pub batch_size: usize,
    pub iterations: usize,
    pub loss: GanLossMode,
    pub snapshot_every: usize,
    pub noise_dim: usize,
    pub generator_hidden: [usize; 2],
    pub discriminator_hidden: [usize; 2],
    /// Final dataset size; `null` scales 10640 per 1200 original samples.
    pub target_total: Option<usize>,
    /// Independent training runs with different seeds; the first run's
    /// model augments the dataset.
    pub runs: usize,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        let g = GanTrainConfig::default();
        Self {
            learning_rate: g.learning_rate,
            beta1: g.beta1,
            k: g.k,
            batch_size: g.batch_size,
            iterations: g.iterations,
            loss: g.loss,
            snapshot_every: g.snapshot_every,
            noise_dim: g.noise_dim,
            generator_hidden: g.generator_hidden,
            discriminator_hidden: g.discriminator_hidden,
            target_total: None,
            runs: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub variant: Variant,
    /// Observation window `T` in seconds.
    pub window_seconds: f64,
    pub hidden: usize,
    pub attention_size: usize,
    pub dropout: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub early_stop_loss: Option<f64>,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        let shape = ClassifierShape::new(Variant::BigruAttention, 1, 1);
        let t = ClassifierTrainConfig::default();
        Self {
            variant: Variant::BigruAttention,
            window_seconds: 0.03,
            hidden: shape.hidden,
            attention_size: shape.attention_size,
            dropout: shape.dropout,
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            epochs: t.epochs,
            early_stop_loss: t.early_stop_loss,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub snr_db: Vec<f64>,
    /// Observation windows of the sweep, in milliseconds.
    pub otw_ms: Vec<f64>,
    /// Epoch budget of each sweep retraining; `null` uses the full budget.
    pub sweep_epochs: Option<usize>,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            snr_db: vec![50.0, 40.0, 30.0],
            otw_ms: vec![10.0, 20.0, 30.0, 40.0, 50.0],
            sweep_epochs: Some(50),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text)
            .map_err(|e| CliError::parse(path, e.line() as u64, e.column(), e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CliError::Config(m.to_string()));
        if self.data.bus_count == 0 || self.data.horizon == 0 || !(self.data.step > 0.0) {
            return bad("data: bus_count, horizon and step must be positive");
        }
        if !(self.data.split_ratio > 0.0) {
            return bad("data.split_ratio must be positive");
        }
        if self.labeling.clusters < 2 || !(self.labeling.alpha >= 0.0) || !(self.labeling.tol > 0.0) {
            return bad("labeling: need at least 2 clusters, alpha >= 0 and tol > 0");
        }
        if self.augmentation.runs == 0 {
            return bad("augmentation.runs must be at least 1");
        }
        if self.classifier.batch_size == 0 || !(self.classifier.learning_rate > 0.0) {
            return bad("classifier: batch_size and learning_rate must be positive");
        }
        if self.evaluation.snr_db.iter().any(|s| !s.is_finite()) {
            return bad("evaluation.snr_db entries must be finite");
        }
        if self.evaluation.otw_ms.iter().any(|t| !(*t > 0.0)) {
            return bad("evaluation.otw_ms entries must be positive");
        }
        Ok(())
    }

    pub fn derived_seed(&self, stream: u64) -> u64 {
        derive_seed(self.seed, stream)
    }

    pub fn grid(&self) -> GridConfig {
        GridConfig {
            line_count: self.data.line_count,
            clearing_time_count: self.data.clearing_time_count,
            seed: self.derived_seed(stream::GRID),
        }
    }

    pub fn simulation(&self) -> SimulationConfig {
        SimulationConfig {
            bus_count: self.data.bus_count,
            step: self.data.step,
            horizon: self.data.horizon,
        }
    }

    pub fn sfcm(&self) -> SfcmConfig {
        SfcmConfig {
            clusters: self.labeling.clusters,
            alpha: self.labeling.alpha,
            tol: self.labeling.tol,
            max_iter: self.labeling.max_iter,
            seed: self.derived_seed(stream::SFCM),
        }
    }

    /// GAN settings of run `run` under `loss`.
    pub fn gan(&self, loss: GanLossMode, run: usize) -> GanTrainConfig {
        let a = &self.augmentation;
        GanTrainConfig {
            learning_rate: a.learning_rate,
            beta1: a.beta1,
            k: a.k,
            batch_size: a.batch_size,
            iterations: a.iterations,
            seed: derive_seed(self.derived_seed(stream::GAN), run as u64),
            loss,
            snapshot_every: a.snapshot_every,
            noise_dim: a.noise_dim,
            generator_hidden: a.generator_hidden,
            discriminator_hidden: a.discriminator_hidden,
        }
    }

    pub fn target_total(&self, original: usize) -> usize {
        self.augmentation
            .target_total
            .unwrap_or_else(|| (original as f64 * 10640.0 / 1200.0).round() as usize)
    }

    pub fn shape(&self, variant: Variant, q: usize, input_dim: usize) -> ClassifierShape {
        ClassifierShape {
            hidden: self.classifier.hidden,
            attention_size: self.classifier.attention_size,
            dropout: self.classifier.dropout,
            ..ClassifierShape::new(variant, q, input_dim)
        }
    }

    pub fn classifier_training(&self, epochs: Option<usize>) -> ClassifierTrainConfig {
        let c = &self.classifier;
        ClassifierTrainConfig {
            learning_rate: c.learning_rate,
            batch_size: c.batch_size,
            epochs: epochs.unwrap_or(c.epochs),
            seed: self.derived_seed(stream::CLASSIFIER),
            early_stop_loss: c.early_stop_loss,
        }
    }
}
