//! The `DLBAN1` named-array container.
//!
//! A line-oriented text file: the magic line, a version line, a `kind` line,
//! `meta <key> <value>` lines, then `array <name> <dims...>` lines each
//! followed by one line of row-major values, and a closing `end` line.
//! Values use the shortest representation that parses back to the same
//! `f64`, so a save/load cycle is exact.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use dlban_core::augment::{GanHistory, GenerativeModel};
use dlban_core::classifier::{ClassifierShape, SequenceClassifier, Variant};
use dlban_core::datagen::Normalization;
use dlban_core::loss::GanLossMode;
use dlban_core::{DenseArray, ParamSet};

use crate::error::{CliError, Result};

pub const MAGIC: &str = "DLBAN1";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CheckpointError {
    #[error("bad magic string: expected `{MAGIC}`, found `{0}`")]
    BadMagic(String),
    #[error("unsupported checkpoint version `{found}`, this build reads version {VERSION}")]
    Version { found: String },
    #[error("truncated checkpoint: {0}")]
    Truncated(String),
    #[error("line {line}: {detail}")]
    Malformed { line: usize, detail: String },
    #[error("{0}")]
    Content(String),
}

impl CheckpointError {
    pub fn category(&self) -> &'static str {
        match self {
            CheckpointError::Version { .. } => "checkpoint-version",
            CheckpointError::Truncated(_) => "checkpoint-truncated",
            _ => "checkpoint",
        }
    }
}

type CkResult<T> = std::result::Result<T, CheckpointError>;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: String,
    pub meta: BTreeMap<String, String>,
    pub arrays: ParamSet,
}

fn malformed(line: usize, detail: impl Into<String>) -> CheckpointError {
    CheckpointError::Malformed { line, detail: detail.into() }
}

impl Checkpoint {
    pub fn new(kind: &str) -> Self {
        Self {
            kind: kind.to_string(),
            meta: BTreeMap::new(),
            arrays: ParamSet::new(),
        }
    }

    pub fn set(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.meta.insert(key.to_string(), value.to_string());
        self
    }

    pub fn get<T: FromStr>(&self, key: &str) -> CkResult<T> {
        let raw = self
            .meta
            .get(key)
            .ok_or_else(|| CheckpointError::Content(format!("missing header field `{key}`")))?;
        raw.parse()
            .map_err(|_| CheckpointError::Content(format!("header field `{key}` has invalid value `{raw}`")))
    }

    pub fn array(&self, name: &str) -> CkResult<&DenseArray> {
        self.arrays
            .get(name)
            .ok_or_else(|| CheckpointError::Content(format!("missing array `{name}`")))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{MAGIC}");
        let _ = writeln!(out, "version {VERSION}");
        let _ = writeln!(out, "kind {}", self.kind);
        for (k, v) in &self.meta {
            let _ = writeln!(out, "meta {k} {v}");
        }
        for (name, arr) in self.arrays.iter() {
            let _ = write!(out, "array {name}");
            for d in arr.shape() {
                let _ = write!(out, " {d}");
            }
            out.push('\n');
            for (k, v) in arr.as_slice().iter().enumerate() {
                if k > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "{v:?}");
            }
            out.push('\n');
        }
        out.push_str("end\n");
        out
    }

    pub fn parse(text: &str) -> CkResult<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut next = |what: &str| lines.next().ok_or_else(|| CheckpointError::Truncated(format!("file ends before {what}")));

        let (_, magic) = next("the magic string")?;
        if magic != MAGIC {
            return Err(CheckpointError::BadMagic(magic.chars().take(32).collect()));
        }
        let (n, version) = next("the version line")?;
        match version.strip_prefix("version ") {
            Some(v) if v.trim() == VERSION.to_string() => {}
            Some(v) => return Err(CheckpointError::Version { found: v.trim().to_string() }),
            None => return Err(malformed(n, "expected `version <n>`")),
        }
        let (n, kind) = next("the kind line")?;
        let kind = kind.strip_prefix("kind ").ok_or_else(|| malformed(n, "expected `kind <name>`"))?;
        let mut ck = Checkpoint::new(kind.trim());
        loop {
            let (n, line) = next("the `end` line")?;
            let mut words = line.split_ascii_whitespace();
            match words.next() {
                Some("end") => break,
                Some("meta") => {
                    let key = words.next().ok_or_else(|| malformed(n, "meta line without a key"))?;
                    let value = words.collect::<Vec<_>>().join(" ");
                    ck.meta.insert(key.to_string(), value);
                }
                Some("array") => {
                    let name = words.next().ok_or_else(|| malformed(n, "array line without a name"))?;
                    let shape = words
                        .map(|w| w.parse::<usize>().map_err(|_| malformed(n, format!("bad dimension `{w}` of `{name}`"))))
                        .collect::<CkResult<Vec<usize>>>()?;
                    let expected: usize = shape.iter().product();
                    let (vn, values) = next(&format!("the values of `{name}`"))?;
                    let data = values
                        .split_ascii_whitespace()
                        .map(|w| w.parse::<f64>().map_err(|_| malformed(vn, format!("bad value `{w}` in `{name}`"))))
                        .collect::<CkResult<Vec<f64>>>()?;
                    if data.len() != expected {
                        return Err(CheckpointError::Truncated(format!(
                            "`{name}` declares {expected} values, line {vn} holds {}",
                            data.len()
                        )));
                    }
                    let arr = DenseArray::new(shape, data).map_err(|e| malformed(n, e.to_string()))?;
                    ck.arrays.insert(name, arr);
                }
                _ => return Err(malformed(n, format!("unexpected line `{}`", line.chars().take(40).collect::<String>()))),
            }
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| CliError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|source| CliError::Checkpoint { path: path.to_path_buf(), source })
    }
}

fn insert_normalization(ck: &mut Checkpoint, norm: &Normalization) {
    ck.arrays.insert("norm.min", DenseArray::row(norm.min.clone()));
    ck.arrays.insert("norm.max", DenseArray::row(norm.max.clone()));
}

fn read_normalization(ck: &Checkpoint) -> CkResult<Normalization> {
    let min = ck.array("norm.min")?.as_slice().to_vec();
    let max = ck.array("norm.max")?.as_slice().to_vec();
    if min.len() != max.len() {
        return Err(CheckpointError::Content("normalization bounds differ in length".into()));
    }
    Ok(Normalization { min, max })
}

fn expect_kind(ck: &Checkpoint, kind: &str) -> CkResult<()> {
    if ck.kind != kind {
        return Err(CheckpointError::Content(format!("expected a {kind} checkpoint, found `{}`", ck.kind)));
    }
    Ok(())
}

/// Classifier parameters with the architecture header and normalization bounds.
pub fn classifier_checkpoint(model: &SequenceClassifier, norm: &Normalization) -> Checkpoint {
    let s = &model.shape;
    let mut ck = Checkpoint::new("classifier");
    ck.set("variant", s.variant.as_str())
        .set("q", s.q)
        .set("input_dim", s.input_dim)
        .set("hidden", s.hidden)
        .set("attention_size", s.attention_size)
        .set("dropout", s.dropout);
    insert_normalization(&mut ck, norm);
    for (name, arr) in model.params.iter() {
        ck.arrays.insert(name, arr.clone());
    }
    ck
}

pub fn load_classifier(ck: &Checkpoint) -> CkResult<(SequenceClassifier, Normalization)> {
    expect_kind(ck, "classifier")?;
    let variant: String = ck.get("variant")?;
    let variant = Variant::parse(&variant).ok_or_else(|| CheckpointError::Content(format!("unknown variant `{variant}`")))?;
    let shape = ClassifierShape {
        variant,
        q: ck.get("q")?,
        input_dim: ck.get("input_dim")?,
        hidden: ck.get("hidden")?,
        attention_size: ck.get("attention_size")?,
        dropout: ck.get("dropout")?,
    };
    let norm = read_normalization(ck)?;
    if norm.dim() != shape.q * shape.input_dim {
        return Err(CheckpointError::Content("normalization does not match the window size".into()));
    }
    let mut params = ParamSet::new();
    for (name, arr) in ck.arrays.iter().filter(|(n, _)| !n.starts_with("norm.")) {
        params.insert(name, arr.clone());
    }
    let model = SequenceClassifier::from_params(shape, params).map_err(|e| CheckpointError::Content(e.to_string()))?;
    Ok((model, norm))
}

fn loss_name(loss: GanLossMode) -> &'static str {
    match loss {
        GanLossMode::LeastSquares => "least-squares",
        GanLossMode::CrossEntropy => "cross-entropy",
    }
}

/// Generator and discriminator parameters plus the normalization that maps
/// generated windows back to physical units. Training history is not stored.
pub fn gan_checkpoint(model: &GenerativeModel, norm: &Normalization) -> Checkpoint {
    let mut ck = Checkpoint::new("gan");
    ck.set("feature_dim", model.feature_dim)
        .set("noise_dim", model.noise_dim)
        .set("loss", loss_name(model.loss))
        .set("iterations_trained", model.iterations_trained);
    insert_normalization(&mut ck, norm);
    for (name, arr) in model.generator.iter().chain(model.discriminator.iter()) {
        ck.arrays.insert(name, arr.clone());
    }
    ck
}

fn named(ck: &Checkpoint, prefix: &str) -> ParamSet {
    let mut out = ParamSet::new();
    for (name, arr) in ck.arrays.iter().filter(|(n, _)| n.starts_with(prefix)) {
        out.insert(name, arr.clone());
    }
    out
}

pub fn load_gan(ck: &Checkpoint) -> CkResult<(GenerativeModel, Normalization)> {
    expect_kind(ck, "gan")?;
    let loss = match ck.get::<String>("loss")?.as_str() {
        "least-squares" => GanLossMode::LeastSquares,
        "cross-entropy" => GanLossMode::CrossEntropy,
        other => return Err(CheckpointError::Content(format!("unknown loss mode `{other}`"))),
    };
    let model = GenerativeModel {
        feature_dim: ck.get("feature_dim")?,
        noise_dim: ck.get("noise_dim")?,
        loss,
        generator: named(ck, "gen."),
        discriminator: named(ck, "disc."),
        iterations_trained: ck.get("iterations_trained")?,
        history: GanHistory::default(),
    };
    for (prefix, set) in [("gen", &model.generator), ("disc", &model.discriminator)] {
        for name in (1..=3).flat_map(|i| [format!("{prefix}.w{i}"), format!("{prefix}.b{i}")]) {
            if set.get(&name).is_none() {
                return Err(CheckpointError::Content(format!("missing array `{name}`")));
            }
        }
    }
    Ok((model, read_normalization(ck)?))
}
