//! Binary classification metrics. The positive class is "stable" throughout.

use alloc::vec::Vec;

use crate::datagen::Stability;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[cfg_attr(feature = "serde", serde(rename = "fn"))]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// Counts with the roles of the two classes exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            tp: self.tn,
            tn: self.tp,
            fp: self.fn_,
            fn_: self.fp,
        }
    }
}

/// Scalar indicators derived from a confusion matrix. Zero denominators
/// yield 0.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScalarMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub mcc: f64,
    /// Unstable cases predicted stable, over all unstable cases.
    pub misdetection_rate: f64,
    /// Stable cases predicted unstable, over all stable cases.
    pub false_alarm_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
}

/// Full evaluation of a classifier on a test set.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalReport {
    pub counts: ConfusionCounts,
    pub metrics: ScalarMetrics,
    pub auc: f64,
    pub roc: Vec<RocPoint>,
    pub mean_latency_ms: Option<f64>,
}

pub fn confusion_matrix(truth: &[Stability], predicted: &[Stability]) -> Result<ConfusionCounts> {
    if truth.is_empty() {
        return Err(Error::invalid("no labels to compare"));
    }
    if truth.len() != predicted.len() {
        return Err(Error::shape(alloc::format!(
            "{} true labels vs {} predictions",
            truth.len(),
            predicted.len()
        )));
    }
    let mut c = ConfusionCounts::default();
    for (t, p) in truth.iter().zip(predicted) {
        match (t, p) {
            (Stability::Stable, Stability::Stable) => c.tp += 1,
            (Stability::Stable, Stability::Unstable) => c.fn_ += 1,
            (Stability::Unstable, Stability::Stable) => c.fp += 1,
            (Stability::Unstable, Stability::Unstable) => c.tn += 1,
        }
    }
    Ok(c)
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn scalar_metrics(c: &ConfusionCounts) -> Result<ScalarMetrics> {
    let total = c.total();
    if total == 0 {
        return Err(Error::invalid("empty confusion matrix"));
    }
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    let (tp, tn, fp, fn_) = (c.tp as f64, c.tn as f64, c.fp as f64, c.fn_ as f64);
    let den = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
    let mcc = if den > 0.0 {
        (tp * tn - fp * fn_) / libm::sqrt(den)
    } else {
        0.0
    };
    Ok(ScalarMetrics {
        accuracy: ratio(c.tp + c.tn, total),
        precision,
        recall,
        f1,
        mcc,
        misdetection_rate: ratio(c.fp, c.fp + c.tn),
        false_alarm_rate: ratio(c.fn_, c.tp + c.fn_),
    })
}

/// ROC curve and trapezoidal AUC. `scores` are stable-class probabilities;
/// the threshold sweeps the distinct score values from high to low, and tied
/// scores move the curve in a single step.
pub fn roc_auc(scores: &[f64], truth: &[Stability]) -> Result<(Vec<RocPoint>, f64)> {
    if scores.len() != truth.len() {
        return Err(Error::shape("scores and labels differ in length"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite {
            context: "ROC scores".into(),
        });
    }
    let pos = truth.iter().filter(|&&t| t == Stability::Stable).count();
    let neg = truth.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::invalid("ROC needs both classes in the ground truth"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = alloc::vec![RocPoint { fpr: 0.0, tpr: 0.0 }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            match truth[order[i]] {
                Stability::Stable => tp += 1,
                Stability::Unstable => fp += 1,
            }
            i += 1;
        }
        let p = RocPoint {
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        };
        let last = points.last().unwrap();
        auc += (p.fpr - last.fpr) * (p.tpr + last.tpr) * 0.5;
        points.push(p);
    }
    Ok((points, auc))
}

/// Assembles an [`EvalReport`] from labels, hard predictions and stable-class scores.
pub fn evaluate(truth: &[Stability], predicted: &[Stability], scores: &[f64]) -> Result<EvalReport> {
    let counts = confusion_matrix(truth, predicted)?;
    let metrics = scalar_metrics(&counts)?;
    let (roc, auc) = roc_auc(scores, truth)?;
    Ok(EvalReport {
        counts,
        metrics,
        auc,
        roc,
        mean_latency_ms: None,
    })
}
