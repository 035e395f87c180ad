//! Adversarial and classification losses, as plain functions and as graph builders.

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::tensor::DenseArray;

/// Least-squares coding: target for fake samples in the discriminator loss.
pub const LS_FAKE_TARGET: f64 = 0.0;
/// Least-squares coding: target for real samples in the discriminator loss.
pub const LS_REAL_TARGET: f64 = 1.0;
/// Least-squares coding: value the generator wants the discriminator to output.
pub const LS_GENERATOR_TARGET: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum GanLossMode {
    LeastSquares,
    CrossEntropy,
}

fn mean_of(xs: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    xs.iter().map(|&v| f(v)).sum::<f64>() / xs.len() as f64
}

/// `(discriminator loss, generator loss)` for discriminator outputs on a real
/// and a generated batch. In cross-entropy mode the outputs must already be
/// probabilities in `(0, 1)`.
pub fn gan_losses(d_real: &[f64], d_fake: &[f64], mode: GanLossMode) -> Result<(f64, f64)> {
    if d_real.is_empty() || d_fake.is_empty() {
        return Err(Error::invalid("empty discriminator score batch"));
    }
    match mode {
        GanLossMode::LeastSquares => {
            let d = 0.5 * mean_of(d_real, |v| (v - LS_REAL_TARGET) * (v - LS_REAL_TARGET))
                + 0.5 * mean_of(d_fake, |v| (v - LS_FAKE_TARGET) * (v - LS_FAKE_TARGET));
            let g = 0.5 * mean_of(d_fake, |v| (v - LS_GENERATOR_TARGET) * (v - LS_GENERATOR_TARGET));
            Ok((d, g))
        }
        GanLossMode::CrossEntropy => {
            if d_real.iter().chain(d_fake).any(|&p| !(p > 0.0 && p < 1.0)) {
                return Err(Error::invalid("cross-entropy scores must lie in (0, 1)"));
            }
            let d = -mean_of(d_real, libm::log) - mean_of(d_fake, |p| libm::log1p(-p));
            let g = -mean_of(d_fake, libm::log);
            Ok((d, g))
        }
    }
}

/// Discriminator loss node from raw discriminator scores (`n×1`). In
/// cross-entropy mode the scores are logits and the sigmoid is folded into
/// a softplus.
pub fn discriminator_loss_node(g: &mut Graph, real: NodeId, fake: NodeId, mode: GanLossMode) -> NodeId {
    match mode {
        GanLossMode::LeastSquares => {
            let r = g.scale_shift(real, 1.0, -LS_REAL_TARGET);
            let r2 = g.mul(r, r);
            let rm = g.mean(r2);
            let f = g.scale_shift(fake, 1.0, -LS_FAKE_TARGET);
            let f2 = g.mul(f, f);
            let fm = g.mean(f2);
            let total = g.add(rm, fm);
            g.scale_shift(total, 0.5, 0.0)
        }
        GanLossMode::CrossEntropy => {
            let neg = g.scale_shift(real, -1.0, 0.0);
            let r = g.softplus(neg);
            let rm = g.mean(r);
            let f = g.softplus(fake);
            let fm = g.mean(f);
            g.add(rm, fm)
        }
    }
}

/// Generator loss node from raw discriminator scores on generated samples.
pub fn generator_loss_node(g: &mut Graph, fake: NodeId, mode: GanLossMode) -> NodeId {
    match mode {
        GanLossMode::LeastSquares => {
            let f = g.scale_shift(fake, 1.0, -LS_GENERATOR_TARGET);
            let f2 = g.mul(f, f);
            let fm = g.mean(f2);
            g.scale_shift(fm, 0.5, 0.0)
        }
        GanLossMode::CrossEntropy => {
            let neg = g.scale_shift(fake, -1.0, 0.0);
            let f = g.softplus(neg);
            g.mean(f)
        }
    }
}

/// Mean over rows of the squared Euclidean distance between prediction and target rows.
pub fn mse_loss(predicted: &DenseArray, target: &DenseArray) -> Result<f64> {
    let (n, c) = predicted.dims2();
    if target.dims2() != (n, c) {
        return Err(Error::shape(alloc::format!(
            "predictions {:?} vs targets {:?}",
            predicted.shape(),
            target.shape()
        )));
    }
    let total: f64 = predicted
        .as_slice()
        .iter()
        .zip(target.as_slice())
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(total / n as f64)
}

/// Graph form of [`mse_loss`] for `classes`-column predictions.
pub fn mse_loss_node(g: &mut Graph, predicted: NodeId, target: NodeId, classes: usize) -> NodeId {
    let d = g.sub(predicted, target);
    let d2 = g.mul(d, d);
    let m = g.mean(d2);
    g.scale_shift(m, classes as f64, 0.0)
}
