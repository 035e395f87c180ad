//! Semi-supervised fuzzy c-means, silhouette validation, COP-k-means and
//! the cluster → class resolution step.
//!
//! SFCM minimizes
//!
//! ```text
//! J(U, V) = Σ_i Σ_j u_ij² d_ij² + α Σ_i Σ_j (u_ij − f_ij b_j)² d_ij²
//! ```
//!
//! with fuzzifier 2, where `f` is the one-hot supervision of labeled samples
//! and `b_j` flags whether sample `j` is labeled. Both alternating updates are
//! exact block minimizers, so `J` never increases:
//!
//! ```text
//! u_ij = [ (1 + α(1 − b_j Σ_k f_kj)) / Σ_k (d_ij² / d_kj²) + α f_ij b_j ] / (1 + α)
//! v_i  = Σ_j w_ij x_j / Σ_j w_ij,   w_ij = u_ij² + α (u_ij − f_ij b_j)²
//! ```

use alloc::vec;
use alloc::vec::Vec;

use crate::datagen::Stability;
use crate::error::{Error, Result};
use crate::rng::{self, RngExt};
use crate::tensor::DenseArray;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SfcmConfig {
    pub clusters: usize,
    /// Weight of the supervision term.
    pub alpha: f64,
    /// Stop when the objective changes by less than this.
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for SfcmConfig {
    fn default() -> Self {
        Self {
            clusters: 2,
            alpha: 1.0,
            tol: 1e-6,
            max_iter: 300,
            seed: 0,
        }
    }
}

/// Converged SFCM state.
#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyState {
    /// `c × N`, columns on the probability simplex.
    pub memberships: DenseArray,
    /// `c × m`.
    pub centers: DenseArray,
    /// `c × N` one-hot columns for labeled samples, zero columns otherwise.
    pub supervision: DenseArray,
    pub labeled: Vec<bool>,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    pub clusters: usize,
    /// Hard cluster per sample.
    pub labels: Vec<usize>,
    pub iterations: usize,
    /// Objective after every iteration.
    pub objective: Vec<f64>,
}

impl ClusterAssignment {
    pub fn final_objective(&self) -> Option<f64> {
        self.objective.last().copied()
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        for l in 0..4 {
            let d = a[4 * k + l] - b[4 * k + l];
            acc[l] += d * d;
        }
    }
    let mut tail = 0.0;
    for k in chunks * 4..a.len() {
        let d = a[k] - b[k];
        tail += d * d;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn validate_known(known: &[Option<usize>], n: usize, c: usize) -> Result<()> {
    if known.len() != n {
        return Err(Error::shape(alloc::format!("{} labels for {n} samples", known.len())));
    }
    if known.iter().flatten().any(|&k| k >= c) {
        return Err(Error::invalid("known label exceeds the cluster count"));
    }
    Ok(())
}

fn all_identical(x: &DenseArray) -> bool {
    let first = x.row_slice(0);
    (1..x.rows()).all(|j| x.row_slice(j) == first)
}

fn mean_of_rows(x: &DenseArray, rows: impl Iterator<Item = usize>) -> Option<Vec<f64>> {
    let m = x.cols();
    let mut acc = vec![0.0; m];
    let mut n = 0usize;
    for j in rows {
        acc.iter_mut().zip(x.row_slice(j)).for_each(|(a, v)| *a += v);
        n += 1;
    }
    (n > 0).then(|| acc.into_iter().map(|a| a / n as f64).collect())
}

/// Initial centers: the centroid of each class's labeled samples when every
/// class has one, otherwise farthest-point seeding from a seeded start.
fn initial_centers(x: &DenseArray, known: &[Option<usize>], c: usize, seed: u64) -> DenseArray {
    let (n, m) = x.dims2();
    let centroids: Vec<Option<Vec<f64>>> = (0..c)
        .map(|k| mean_of_rows(x, (0..n).filter(|&j| known[j] == Some(k))))
        .collect();
    if centroids.iter().all(Option::is_some) {
        let data = centroids.into_iter().flatten().flatten().collect();
        return DenseArray::matrix(c, m, data).expect("c×m");
    }
    let mut r = rng::seeded(seed);
    let mut chosen = vec![r.random_range(0..n)];
    let mut nearest: Vec<f64> = (0..n).map(|j| sq_dist(x.row_slice(j), x.row_slice(chosen[0]))).collect();
    while chosen.len() < c {
        let next = (0..n)
            .max_by(|&a, &b| nearest[a].total_cmp(&nearest[b]).then(b.cmp(&a)))
            .expect("n > 0");
        chosen.push(next);
        for (j, d) in nearest.iter_mut().enumerate() {
            *d = d.min(sq_dist(x.row_slice(j), x.row_slice(next)));
        }
    }
    let data = chosen.iter().flat_map(|&j| x.row_slice(j).to_vec()).collect();
    DenseArray::matrix(c, m, data).expect("c×m")
}

fn distances(x: &DenseArray, centers: &DenseArray) -> Vec<f64> {
    let (n, _) = x.dims2();
    let c = centers.rows();
    let mut d = vec![0.0; c * n];
    for i in 0..c {
        for j in 0..n {
            d[i * n + j] = sq_dist(x.row_slice(j), centers.row_slice(i));
        }
    }
    d
}

fn objective(d2: &[f64], u: &[f64], f: &[f64], b: &[bool], alpha: f64, c: usize, n: usize) -> f64 {
    let mut total = 0.0;
    for i in 0..c {
        for j in 0..n {
            let k = i * n + j;
            let fb = if b[j] { f[k] } else { 0.0 };
            let s = u[k] - fb;
            total += (u[k] * u[k] + alpha * s * s) * d2[k];
        }
    }
    total
}

/// Fits SFCM. `known[j]` is the class index of sample `j` when labeled;
/// class `k` supervises cluster `k`.
pub fn sfcm_fit(features: &DenseArray, known: &[Option<usize>], config: &SfcmConfig) -> Result<(FuzzyState, ClusterAssignment)> {
    let c = config.clusters;
    let n = features.rows();
    if c < 2 || n < c {
        return Err(Error::invalid(alloc::format!("need N ≥ c ≥ 2, got N={n}, c={c}")));
    }
    validate_known(known, n, c)?;
    if config.alpha > 0.0 && (0..c).any(|k| !known.contains(&Some(k))) {
        return Err(Error::invalid("supervised SFCM needs a labeled sample for every class"));
    }
    let centers = initial_centers(features, known, c, config.seed);
    sfcm_fit_from(features, known, config, centers)
}

/// [`sfcm_fit`] from explicit initial centers (`c × m`).
pub fn sfcm_fit_from(
    features: &DenseArray,
    known: &[Option<usize>],
    config: &SfcmConfig,
    initial_centers: DenseArray,
) -> Result<(FuzzyState, ClusterAssignment)> {
    let c = config.clusters;
    let (n, m) = features.dims2();
    let alpha = config.alpha;
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::invalid("alpha must be a finite non-negative number"));
    }
    if c < 2 || n < c {
        return Err(Error::invalid(alloc::format!("need N ≥ c ≥ 2, got N={n}, c={c}")));
    }
    validate_known(known, n, c)?;
    if initial_centers.dims2() != (c, m) {
        return Err(Error::shape("initial centers must be c × m"));
    }
    if !features.all_finite() {
        return Err(Error::NonFinite { context: "SFCM features".into() });
    }
    if all_identical(features) {
        return Err(Error::invalid("all samples are identical"));
    }

    let labeled: Vec<bool> = known.iter().map(Option::is_some).collect();
    let mut f = vec![0.0; c * n];
    for (j, k) in known.iter().enumerate() {
        if let Some(k) = k {
            f[k * n + j] = 1.0;
        }
    }
    let mut centers = initial_centers;
    let mut u = vec![0.0; c * n];
    let mut history = Vec::new();
    let mut iterations = 0;

    for _ in 0..config.max_iter {
        iterations += 1;
        let d2 = distances(features, &centers);
        for j in 0..n {
            let bj = if labeled[j] { 1.0 } else { 0.0 };
            let fsum: f64 = (0..c).map(|i| f[i * n + j]).sum();
            let zeros: Vec<usize> = (0..c).filter(|&i| d2[i * n + j] < 1e-300).collect();
            if zeros.is_empty() {
                let inv_sum: f64 = (0..c).map(|k| 1.0 / d2[k * n + j]).sum();
                let free = 1.0 + alpha * (1.0 - bj * fsum);
                for i in 0..c {
                    let k = i * n + j;
                    u[k] = (free / (d2[k] * inv_sum) + alpha * f[k] * bj) / (1.0 + alpha);
                }
            } else {
                // Coincident center: it absorbs whatever mass the others do not need.
                let mut rest = 1.0;
                for i in 0..c {
                    let k = i * n + j;
                    if !zeros.contains(&i) {
                        u[k] = alpha * f[k] * bj / (1.0 + alpha);
                        rest -= u[k];
                    }
                }
                for &i in &zeros {
                    u[i * n + j] = rest / zeros.len() as f64;
                }
            }
        }

        let mut next = DenseArray::zeros(&[c, m]);
        for i in 0..c {
            let mut wsum = 0.0;
            let row = &mut next.as_mut_slice()[i * m..(i + 1) * m];
            for j in 0..n {
                let k = i * n + j;
                let s = u[k] - if labeled[j] { f[k] } else { 0.0 };
                let w = u[k] * u[k] + alpha * s * s;
                if w != 0.0 {
                    wsum += w;
                    row.iter_mut().zip(features.row_slice(j)).for_each(|(a, x)| *a += w * x);
                }
            }
            if wsum > 0.0 {
                row.iter_mut().for_each(|a| *a /= wsum);
            } else {
                row.copy_from_slice(centers.row_slice(i));
            }
        }
        centers = next;

        let d2 = distances(features, &centers);
        let j_now = objective(&d2, &u, &f, &labeled, alpha, c, n);
        let done = history.last().is_some_and(|&prev: &f64| (prev - j_now).abs() < config.tol);
        history.push(j_now);
        if done {
            break;
        }
    }

    let labels = (0..n)
        .map(|j| {
            (0..c)
                .max_by(|&a, &b| u[a * n + j].total_cmp(&u[b * n + j]).then(b.cmp(&a)))
                .expect("c ≥ 2")
        })
        .collect();
    let state = FuzzyState {
        memberships: DenseArray::matrix(c, n, u)?,
        centers,
        supervision: DenseArray::matrix(c, n, f)?,
        labeled,
        alpha,
    };
    let assignment = ClusterAssignment {
        clusters: c,
        labels,
        iterations,
        objective: history,
    };
    Ok((state, assignment))
}

/// Mean silhouette coefficient over all samples with Euclidean distance.
/// Singleton clusters have zero cohesion.
pub fn silhouette(features: &DenseArray, labels: &[usize]) -> Result<f64> {
    let n = features.rows();
    if labels.len() != n {
        return Err(Error::shape("one label per sample required"));
    }
    if n == 0 {
        return Err(Error::invalid("no samples"));
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; k];
    labels.iter().for_each(|&l| sizes[l] += 1);
    let present: Vec<usize> = (0..k).filter(|&c| sizes[c] > 0).collect();
    if present.len() < 2 {
        return Err(Error::invalid("silhouette needs at least two non-empty clusters"));
    }
    let mut total = 0.0;
    let mut sums = vec![0.0; k];
    for j in 0..n {
        sums.iter_mut().for_each(|s| *s = 0.0);
        for i in 0..n {
            if i != j {
                sums[labels[i]] += libm::sqrt(sq_dist(features.row_slice(i), features.row_slice(j)));
            }
        }
        let own = labels[j];
        let a = if sizes[own] > 1 { sums[own] / (sizes[own] - 1) as f64 } else { 0.0 };
        let b = present
            .iter()
            .filter(|&&c| c != own)
            .map(|&c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / n as f64)
}

/// Constrained k-means: samples with equal known labels must share a cluster
/// and samples with different known labels must not.
pub fn cop_kmeans_fit(features: &DenseArray, known: &[Option<usize>], clusters: usize, seed: u64) -> Result<ClusterAssignment> {
    let (n, m) = features.dims2();
    if clusters < 1 || n < clusters {
        return Err(Error::invalid(alloc::format!("need N ≥ c ≥ 1, got N={n}, c={clusters}")));
    }
    if known.len() != n {
        return Err(Error::shape(alloc::format!("{} labels for {n} samples", known.len())));
    }
    let mut groups: Vec<usize> = known.iter().flatten().copied().collect();
    groups.sort_unstable();
    groups.dedup();
    if groups.len() > clusters {
        return Err(Error::Infeasible(alloc::format!(
            "{} mutually cannot-linked label groups do not fit in {clusters} clusters",
            groups.len()
        )));
    }
    let members: Vec<Vec<usize>> = groups
        .iter()
        .map(|g| (0..n).filter(|&j| known[j] == Some(*g)).collect())
        .collect();

    // Seeds: labeled-group centroids first, then k-means++ draws.
    let mut r = rng::seeded(seed);
    let mut centers: Vec<Vec<f64>> = members
        .iter()
        .map(|ids| mean_of_rows(features, ids.iter().copied()).expect("non-empty group"))
        .collect();
    if centers.is_empty() {
        centers.push(features.row_slice(r.random_range(0..n)).to_vec());
    }
    while centers.len() < clusters {
        let d: Vec<f64> = (0..n)
            .map(|j| centers.iter().map(|c| sq_dist(features.row_slice(j), c)).fold(f64::INFINITY, f64::min))
            .collect();
        let total: f64 = d.iter().sum();
        let pick = if total > 0.0 {
            let mut target = r.random::<f64>() * total;
            let mut pick = n - 1;
            for (j, dj) in d.iter().enumerate() {
                if target < *dj {
                    pick = j;
                    break;
                }
                target -= dj;
            }
            pick
        } else {
            r.random_range(0..n)
        };
        centers.push(features.row_slice(pick).to_vec());
    }

    let mut labels = vec![usize::MAX; n];
    let mut history = Vec::new();
    let mut iterations = 0;
    for _ in 0..300 {
        iterations += 1;
        let mut next = vec![usize::MAX; n];
        let mut taken = vec![false; clusters];
        for ids in &members {
            let best = (0..clusters)
                .filter(|&c| !taken[c])
                .min_by(|&a, &b| {
                    let ca: f64 = ids.iter().map(|&j| sq_dist(features.row_slice(j), &centers[a])).sum();
                    let cb: f64 = ids.iter().map(|&j| sq_dist(features.row_slice(j), &centers[b])).sum();
                    ca.total_cmp(&cb).then(a.cmp(&b))
                })
                .ok_or_else(|| Error::Infeasible("no cluster left for a label group".into()))?;
            taken[best] = true;
            ids.iter().for_each(|&j| next[j] = best);
        }
        for j in 0..n {
            if known[j].is_none() {
                next[j] = (0..clusters)
                    .min_by(|&a, &b| {
                        sq_dist(features.row_slice(j), &centers[a])
                            .total_cmp(&sq_dist(features.row_slice(j), &centers[b]))
                            .then(a.cmp(&b))
                    })
                    .expect("clusters ≥ 1");
            }
        }
        for (c, center) in centers.iter_mut().enumerate() {
            if let Some(mean) = mean_of_rows(features, (0..n).filter(|&j| next[j] == c)) {
                *center = mean;
            }
        }
        let sse: f64 = (0..n).map(|j| sq_dist(features.row_slice(j), &centers[next[j]])).sum();
        history.push(sse);
        let changed = next != labels;
        labels = next;
        if !changed {
            break;
        }
    }
    let _ = m;
    Ok(ClusterAssignment {
        clusters,
        labels,
        iterations,
        objective: history,
    })
}

/// Binary labels for every sample plus the class chosen for each cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolution {
    pub labels: Vec<Stability>,
    pub cluster_class: Vec<Stability>,
}

/// Maps each cluster to the majority known class among its members and
/// labels every unknown sample accordingly. Known labels are kept as given.
pub fn resolve_labels(assignment: &ClusterAssignment, known: &[Option<Stability>]) -> Result<Resolution> {
    if known.len() != assignment.labels.len() {
        return Err(Error::shape("one known-label slot per sample required"));
    }
    let mut votes = vec![[0usize; 2]; assignment.clusters];
    for (&c, k) in assignment.labels.iter().zip(known) {
        if let Some(k) = k {
            votes[c][k.index()] += 1;
        }
    }
    let mut cluster_class = Vec::with_capacity(votes.len());
    for (c, v) in votes.iter().enumerate() {
        let class = match v[1].cmp(&v[0]) {
            core::cmp::Ordering::Greater => Stability::Stable,
            core::cmp::Ordering::Less => Stability::Unstable,
            core::cmp::Ordering::Equal if v[0] == 0 => {
                return Err(Error::Ambiguous(alloc::format!("cluster {c} has no known-label samples")))
            }
            core::cmp::Ordering::Equal => {
                return Err(Error::Ambiguous(alloc::format!("cluster {c} has tied known labels")))
            }
        };
        cluster_class.push(class);
    }
    let labels = assignment
        .labels
        .iter()
        .zip(known)
        .map(|(&c, k)| k.unwrap_or(cluster_class[c]))
        .collect();
    Ok(Resolution { labels, cluster_class })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equidistant_point_splits_evenly() {
        let x = DenseArray::matrix(3, 1, vec![-1.0, 0.0, 1.0]).unwrap();
        let centers = DenseArray::matrix(2, 1, vec![-1.0, 1.0]).unwrap();
        let cfg = SfcmConfig { alpha: 0.0, max_iter: 1, ..Default::default() };
        let (state, _) = sfcm_fit_from(&x, &[None; 3], &cfg, centers).unwrap();
        assert_eq!(state.memberships.get(0, 1), 0.5);
        assert_eq!(state.memberships.get(1, 1), 0.5);
        // Points on the centers take full membership.
        assert_eq!(state.memberships.get(0, 0), 1.0);
        assert_eq!(state.memberships.get(1, 2), 1.0);
    }

    #[test]
    fn identical_points_rejected() {
        let x = DenseArray::filled(&[5, 2], 3.0);
        assert!(sfcm_fit(&x, &[None; 5], &SfcmConfig { alpha: 0.0, ..Default::default() }).is_err());
    }

    #[test]
    fn supervised_requires_each_class() {
        let x = DenseArray::matrix(4, 1, vec![0.0, 0.1, 5.0, 5.1]).unwrap();
        let known = [Some(0), None, None, None];
        assert!(sfcm_fit(&x, &known, &SfcmConfig::default()).is_err());
    }

    #[test]
    fn silhouette_examples() {
        let x = DenseArray::matrix(4, 1, vec![0.0, 0.1, 10.0, 10.1]).unwrap();
        let sc = silhouette(&x, &[0, 0, 1, 1]).unwrap();
        // a = 0.1 everywhere; b is 10.05 for the outer points and 9.95 for the inner ones.
        let expected = 0.5 * ((10.05 - 0.1) / 10.05 + (9.95 - 0.1) / 9.95);
        assert!((sc - expected).abs() < 1e-12, "{sc}");
        assert!((sc - 0.990).abs() < 1e-3);
        let dup = DenseArray::matrix(4, 1, vec![1.0, 1.0, 4.0, 4.0]).unwrap();
        assert_eq!(silhouette(&dup, &[0, 0, 1, 1]).unwrap(), 1.0);
        assert!(silhouette(&x, &[0, 0, 0, 0]).is_err());
    }

    #[test]
    fn resolve_majority_and_errors() {
        let a = ClusterAssignment { clusters: 2, labels: vec![0, 0, 0, 1, 1], iterations: 1, objective: vec![] };
        let s = Some(Stability::Stable);
        let u = Some(Stability::Unstable);
        let r = resolve_labels(&a, &[s, s, u, u, None]).unwrap();
        assert_eq!(r.cluster_class, vec![Stability::Stable, Stability::Unstable]);
        assert_eq!(r.labels[2], Stability::Unstable);
        assert_eq!(r.labels[4], Stability::Unstable);
        assert!(matches!(resolve_labels(&a, &[s, u, None, u, None]), Err(Error::Ambiguous(_))));
        assert!(matches!(resolve_labels(&a, &[s, s, None, None, None]), Err(Error::Ambiguous(_))));
    }

    #[test]
    fn cop_kmeans_infeasible_when_too_many_groups() {
        let x = DenseArray::matrix(3, 1, vec![0.0, 1.0, 2.0]).unwrap();
        assert!(matches!(cop_kmeans_fit(&x, &[Some(0), Some(1), None], 1, 0), Err(Error::Infeasible(_))));
    }
}
