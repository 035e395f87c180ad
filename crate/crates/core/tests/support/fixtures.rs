//! Toy instances and independent oracles shared by the core tests and the acceptance suite.

#![allow(dead_code)]

use dlban_core::datagen::Stability;
use dlban_core::rng;
use dlban_core::DenseArray;

/// `n` 2-D points split evenly between Gaussian blobs (σ = 1) centered at
/// the origin and at `(sep, sep)`; returns points and blob index.
pub fn two_blobs(n: usize, sep: f64, seed: u64) -> (DenseArray, Vec<usize>) {
    let mut r = rng::seeded(seed);
    let mut data = Vec::with_capacity(2 * n);
    let mut truth = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % 2;
        let off = c as f64 * sep;
        data.push(off + rng::standard_normal(&mut r));
        data.push(off + rng::standard_normal(&mut r));
        truth.push(c);
    }
    (DenseArray::matrix(n, 2, data).unwrap(), truth)
}

/// One sample in `stride` keeps its label, drawn from both blobs of [`two_blobs`].
pub fn sparse_labels(truth: &[usize], stride: usize) -> Vec<Option<usize>> {
    truth
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let k = i % (2 * stride);
            (k == 0 || k == 2 * stride - 1).then_some(c)
        })
        .collect()
}

/// Plain fuzzy c-means with fuzzifier 2, run for exactly `iterations` rounds
/// from `centers`. Returns the `c × N` memberships in row-major order.
pub fn fcm_oracle(x: &DenseArray, centers: &DenseArray, iterations: usize) -> Vec<f64> {
    let (n, m) = x.dims2();
    let c = centers.rows();
    let mut v: Vec<Vec<f64>> = (0..c).map(|i| centers.row_slice(i).to_vec()).collect();
    let mut u = vec![0.0; c * n];
    for _ in 0..iterations {
        for j in 0..n {
            let d: Vec<f64> = v
                .iter()
                .map(|vi| vi.iter().zip(x.row_slice(j)).map(|(a, b)| (a - b) * (a - b)).sum())
                .collect();
            for i in 0..c {
                u[i * n + j] = 1.0 / d.iter().map(|dk| d[i] / dk).sum::<f64>();
            }
        }
        for i in 0..c {
            let w: Vec<f64> = (0..n).map(|j| u[i * n + j] * u[i * n + j]).collect();
            let total: f64 = w.iter().sum();
            v[i] = (0..m).map(|k| (0..n).map(|j| w[j] * x.get(j, k)).sum::<f64>() / total).collect();
        }
    }
    u
}

/// AUC as the fraction of (stable, unstable) pairs ranked correctly, ties counting one half.
pub fn pair_count_auc(scores: &[f64], truth: &[Stability]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, ti) in truth.iter().enumerate() {
        if *ti != Stability::Stable {
            continue;
        }
        for (j, tj) in truth.iter().enumerate() {
            if *tj != Stability::Unstable {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}
