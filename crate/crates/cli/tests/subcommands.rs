//! Runs the `dlban` binary on a 60-scenario grid with tiny training budgets.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dlban::checkpoint::{load_classifier, Checkpoint};
use dlban::config::{stream, PipelineConfig};
use dlban::io;
use dlban_core::classifier::{ClassifierShape, SequenceClassifier, Variant};
use dlban_core::datagen::{Label, Origin};
use dlban_core::rng::derive_seed;

const TINY: &str = r#"{
  "seed": 11,
  "data": {"line_count": 1, "clearing_time_count": 1},
  "augmentation": {"iterations": 4, "runs": 1, "snapshot_every": 2, "target_total": 90},
  "classifier": {"epochs": 2, "hidden": 6},
  "evaluation": {"snr_db": [50], "otw_ms": [30, 3000], "sweep_epochs": 1}
}"#;

struct Run {
    dir: tempfile::TempDir,
    config: PathBuf,
}

impl Run {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let config = dir.path().join("config.json");
        std::fs::write(&config, TINY).unwrap();
        Self { dir, config }
    }

    fn out(&self) -> PathBuf {
        self.dir.path().join("out")
    }

    fn dlban(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_dlban"))
            .arg("--config")
            .arg(&self.config)
            .arg("--out")
            .arg(self.out())
            .args(args)
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let o = self.dlban(args);
        assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        String::from_utf8(o.stdout).unwrap()
    }

    /// Runs a failing command and returns its error category.
    fn fails(&self, args: &[&str]) -> String {
        let o = self.dlban(args);
        assert!(!o.status.success(), "{args:?} should fail");
        let err = String::from_utf8(o.stderr).unwrap();
        assert_eq!(err.trim_end().lines().count(), 1, "single-line error expected: {err}");
        err.strip_prefix("error[").and_then(|r| r.split(']').next()).unwrap().to_string()
    }

    fn file(&self, name: &str) -> PathBuf {
        self.out().join(name)
    }
}

fn value(line: &str, key: &str) -> f64 {
    line.split_whitespace()
        .find_map(|kv| kv.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("`{key}` missing from `{line}`"))
        .parse()
        .unwrap()
}

fn full_stages(r: &Run) {
    r.ok(&["generate"]);
    r.ok(&["label"]);
    r.ok(&["augment"]);
    r.ok(&["train"]);
}

#[test]
fn generate_writes_the_grid() {
    let r = Run::new();
    let out = r.ok(&["generate"]);
    // 3 load levels × 4 motor shares × 1 line × 5 fault locations × 1 clearing time
    assert_eq!(value(&out, "samples"), 60.0);
    let t = io::read_windows(&r.file("windows.csv")).unwrap();
    assert_eq!((t.samples.len(), t.q, t.channels), (60, 3, 30));
    let counts = ["stable", "unstable", "unlabeled"].map(|k| value(&out, k));
    assert_eq!(counts.iter().sum::<f64>(), 60.0);
}

#[test]
fn full_pipeline_and_assessment() {
    let r = Run::new();
    full_stages(&r);
    let aug = io::read_windows(&r.file("augmented.csv")).unwrap();
    assert_eq!(aug.samples.len(), 90);
    assert_eq!(aug.samples.iter().filter(|s| s.origin == Origin::Generated).count(), 30);
    assert!(aug.samples.iter().all(|s| s.label != Label::Unlabeled));

    let report = r.ok(&["eval"]);
    assert!(report.contains("accuracy="));
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(r.file("eval_bigru-attention_augmented.json")).unwrap()).unwrap();
    assert!(json["mean_latency_ms"].is_null());
    r.ok(&["eval", "--timing"]);
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(r.file("eval_bigru-attention_augmented.json")).unwrap()).unwrap();
    assert!(json["mean_latency_ms"].as_f64().unwrap() > 0.0);

    let labeled = io::read_windows(&r.file("labeled.csv")).unwrap();
    let (_, test) = io::read_partition(&r.file("labeled_partition.csv"), &labeled.samples).unwrap();
    let s = &labeled.samples[test[0]];
    let window = dlban_core::DenseArray::matrix(labeled.q, labeled.channels, s.features.clone()).unwrap();
    let wpath = r.dir.path().join("window.csv");
    io::write_window_file(&wpath, &window).unwrap();
    let line = r.ok(&["assess", "--window", wpath.to_str().unwrap()]);
    assert!(line.starts_with("verdict=stable") || line.starts_with("verdict=unstable"), "{line}");
    assert!((value(&line, "p_stable") + value(&line, "p_unstable") - 1.0).abs() < 1e-12);
    assert!(value(&line, "latency_ms") > 0.0);

    let noise = r.ok(&["noise"]);
    assert_eq!(noise.lines().count(), 2);
    let csv = std::fs::read_to_string(r.file("noise_bigru-attention_augmented.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);

    let sweep = r.ok(&["sweep-otw"]);
    assert!(sweep.contains("skipped window_ms=3000"));
    let csv = std::fs::read_to_string(r.file("sweep_otw_bigru-attention.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);

    std::fs::write(&wpath, "u_0,p_0,q_0\n1,2,3\n").unwrap();
    assert_eq!(r.fails(&["assess", "--window", wpath.to_str().unwrap()]), "parse");
}

#[test]
fn zero_epochs_checkpoint_the_initialization() {
    let r = Run::new();
    r.ok(&["generate"]);
    r.ok(&["label"]);
    r.ok(&["train", "--dataset", "labeled", "--variant", "gru", "--epochs", "0"]);
    let ck = Checkpoint::load(&r.file("model_gru_labeled.ckpt")).unwrap();
    let (model, _) = load_classifier(&ck).unwrap();
    let cfg: PipelineConfig = serde_json::from_str(TINY).unwrap();
    let shape = ClassifierShape { hidden: 6, ..ClassifierShape::new(Variant::Gru, 3, 30) };
    let expected = SequenceClassifier::new(shape, derive_seed(cfg.seed, stream::CLASSIFIER)).unwrap();
    assert_eq!(model, expected);
}

#[test]
fn error_categories() {
    let r = Run::new();
    assert_eq!(r.fails(&["label"]), "missing-artifact");
    assert_eq!(r.fails(&["eval"]), "missing-artifact");
    std::fs::write(&r.config, r#"{"classifier": {"epoch": 3}}"#).unwrap();
    assert_eq!(r.fails(&["generate"]), "parse");
    std::fs::write(&r.config, r#"{"labeling": {"clusters": 1}}"#).unwrap();
    assert_eq!(r.fails(&["generate"]), "config");
}

#[test]
fn eval_counts_fixture() {
    let r = Run::new();
    let counts = r.dir.path().join("counts.json");
    std::fs::write(&counts, r#"{"tp": 1368, "fn": 15, "fp": 0, "tn": 1277}"#).unwrap();
    let line = r.ok(&["eval", "--counts", counts.to_str().unwrap()]);
    assert!((value(&line, "accuracy") - 0.9944).abs() < 5e-4);
    assert!((value(&line, "f1") - 0.9945).abs() < 5e-4);
    assert!((value(&line, "mcc") - 0.9888).abs() < 5e-4);
}

fn rewrite_labels(path: &Path, f: impl Fn(Label) -> Label) {
    let mut t = io::read_windows(path).unwrap();
    t.samples.iter_mut().for_each(|s| s.label = f(s.label));
    io::write_windows(path, t.q, t.channels, &t.samples).unwrap();
}

#[test]
fn label_without_unlabeled_samples_is_a_no_op() {
    let r = Run::new();
    r.ok(&["generate"]);
    let windows = r.file("windows.csv");
    rewrite_labels(&windows, |l| if l == Label::Unlabeled { Label::Stable } else { l });
    let out = r.ok(&["label"]);
    assert!(out.contains("sfcm_silhouette= cop_kmeans_silhouette="), "{out}");
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(r.file("label_report.json")).unwrap()).unwrap();
    assert!(report["sfcm"].is_null());
    assert!(report["prelabel_silhouette"].as_f64().is_some());
    let before = io::read_windows(&windows).unwrap();
    let after = io::read_windows(&r.file("labeled.csv")).unwrap();
    assert_eq!(before.samples, after.samples);
}

#[test]
fn label_needs_both_classes() {
    let r = Run::new();
    r.ok(&["generate"]);
    rewrite_labels(&r.file("windows.csv"), |l| if l == Label::Unstable { Label::Unlabeled } else { l });
    assert_eq!(r.fails(&["label"]), "invalid-input");
}

#[test]
fn eval_guards() {
    let r = Run::new();
    full_stages(&r);
    // a generated sample moved into the test partition
    let aug = io::read_windows(&r.file("augmented.csv")).unwrap();
    let part = r.file("augmented_partition.csv");
    let (mut train, mut test) = io::read_partition(&part, &aug.samples).unwrap();
    let g = aug.samples.iter().position(|s| s.origin == Origin::Generated).unwrap();
    train.retain(|&i| i != g);
    test.push(g);
    io::write_partition(&part, &aug.samples, &train, &test).unwrap();
    assert_eq!(r.fails(&["eval"]), "purity");

    // a checkpoint trained on 3-step windows against 2-step data
    std::fs::write(
        &r.config,
        TINY.replace(r#""classifier": {"#, r#""classifier": {"window_seconds": 0.02, "#),
    )
    .unwrap();
    r.ok(&["generate"]);
    r.ok(&["label"]);
    std::fs::copy(r.file("model_bigru-attention_augmented.ckpt"), r.file("model_bigru-attention_labeled.ckpt")).unwrap();
    assert_eq!(r.fails(&["eval", "--dataset", "labeled"]), "shape");
}
