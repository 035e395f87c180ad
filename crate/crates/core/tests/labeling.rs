#[path = "support/fixtures.rs"]
mod fixtures;

use dlban_core::datagen::Stability;
use dlban_core::labeling::{cop_kmeans_fit, resolve_labels, sfcm_fit, sfcm_fit_from, silhouette, SfcmConfig};
use dlban_core::{DenseArray, Error};
use fixtures::{fcm_oracle, sparse_labels, two_blobs};
use proptest::prelude::*;

#[test]
fn alpha_zero_matches_plain_fcm() {
    let (x, _) = two_blobs(20, 3.0, 7);
    let init = DenseArray::matrix(2, 2, vec![x.get(0, 0), x.get(0, 1), x.get(1, 0), x.get(1, 1)]).unwrap();
    let cfg = SfcmConfig { alpha: 0.0, ..Default::default() };
    let (state, assign) = sfcm_fit_from(&x, &[None; 20], &cfg, init.clone()).unwrap();
    let oracle = fcm_oracle(&x, &init, assign.iterations);
    let diff = state
        .memberships
        .as_slice()
        .iter()
        .zip(&oracle)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(diff < 1e-8, "max membership deviation {diff:e}");
}

#[test]
fn labeled_points_follow_their_labels() {
    let (x, truth) = two_blobs(200, 6.0, 11);
    let known = sparse_labels(&truth, 10);
    let (_, assign) = sfcm_fit(&x, &known, &SfcmConfig::default()).unwrap();
    for (j, k) in known.iter().enumerate() {
        if let Some(k) = k {
            assert_eq!(assign.labels[j], *k, "labeled sample {j}");
        }
    }
}

#[test]
fn objective_never_increases() {
    let (x, truth) = two_blobs(200, 2.5, 3);
    let known = sparse_labels(&truth, 10);
    let (_, assign) = sfcm_fit(&x, &known, &SfcmConfig { tol: 0.0, max_iter: 60, ..Default::default() }).unwrap();
    for w in assign.objective.windows(2) {
        assert!(w[1] <= w[0] + 1e-9, "{} -> {}", w[0], w[1]);
    }
}

#[test]
fn large_alpha_pins_labeled_samples() {
    // overlapping blobs so the supervision has to override geometry
    let (x, truth) = two_blobs(120, 1.0, 5);
    let known = sparse_labels(&truth, 4);
    let (_, assign) = sfcm_fit(&x, &known, &SfcmConfig { alpha: 100.0, ..Default::default() }).unwrap();
    for (j, k) in known.iter().enumerate() {
        if let Some(k) = k {
            assert_eq!(assign.labels[j], *k);
        }
    }
}

#[test]
fn coincident_point_takes_full_membership() {
    let x = DenseArray::matrix(4, 1, vec![0.0, 0.0, 5.0, 6.0]).unwrap();
    let init = DenseArray::matrix(2, 1, vec![0.0, 5.5]).unwrap();
    let cfg = SfcmConfig { alpha: 0.0, max_iter: 1, ..Default::default() };
    let (state, _) = sfcm_fit_from(&x, &[None; 4], &cfg, init).unwrap();
    assert_eq!(state.memberships.get(0, 0), 1.0);
    assert_eq!(state.memberships.get(1, 0), 0.0);
}

#[test]
fn supervision_matrix_layout() {
    let (x, truth) = two_blobs(30, 5.0, 1);
    let known = sparse_labels(&truth, 3);
    let (state, _) = sfcm_fit(&x, &known, &SfcmConfig::default()).unwrap();
    for (j, k) in known.iter().enumerate() {
        assert_eq!(state.labeled[j], k.is_some());
        let col: Vec<f64> = (0..2).map(|i| state.supervision.get(i, j)).collect();
        match k {
            Some(k) => assert_eq!(col[*k], 1.0),
            None => assert_eq!(col, vec![0.0, 0.0]),
        }
        assert!((col.iter().sum::<f64>() - if k.is_some() { 1.0 } else { 0.0 }).abs() == 0.0);
    }
}

#[test]
fn interleaved_clusters_score_non_positive() {
    let x = DenseArray::matrix(6, 1, vec![-1.0, -0.5, 0.0, 0.5, 1.0, 1.5]).unwrap();
    let sc = silhouette(&x, &[0, 1, 0, 1, 0, 1]).unwrap();
    assert!(sc <= 0.0, "{sc}");
}

#[test]
fn cop_kmeans_examples() {
    // No labels: converges to the obvious split of two far blobs.
    let (x, truth) = two_blobs(40, 10.0, 2);
    let a = cop_kmeans_fit(&x, &[None; 40], 2, 4).unwrap();
    let same = a.labels.iter().zip(&truth).filter(|(a, t)| a == t).count();
    assert!(same == 40 || same == 0);

    // Two close points with different labels end up apart.
    let x = DenseArray::matrix(4, 1, vec![0.0, 0.01, 5.0, 5.01]).unwrap();
    let a = cop_kmeans_fit(&x, &[Some(0), Some(1), None, None], 2, 0).unwrap();
    assert_ne!(a.labels[0], a.labels[1]);

    // Fully labeled blobs reproduce the labels.
    let (x, truth) = two_blobs(30, 8.0, 9);
    let known: Vec<Option<usize>> = truth.iter().map(|&t| Some(t)).collect();
    let a = cop_kmeans_fit(&x, &known, 2, 1).unwrap();
    assert_eq!(a.labels, truth);
}

#[test]
fn resolve_keeps_known_labels() {
    let (x, truth) = two_blobs(40, 7.0, 8);
    let known = sparse_labels(&truth, 5);
    let (_, assign) = sfcm_fit(&x, &known, &SfcmConfig::default()).unwrap();
    let mut stab: Vec<Option<Stability>> = known.iter().map(|k| k.map(|c| Stability::from_index(c).unwrap())).collect();
    // flip one known label against its cluster majority
    stab[0] = Some(Stability::from_index(1 - truth[0]).unwrap());
    let r = resolve_labels(&assign, &stab).unwrap();
    assert_eq!(r.labels[0], stab[0].unwrap());
    for (j, t) in truth.iter().enumerate().skip(1) {
        assert_eq!(r.labels[j].index(), *t, "sample {j}");
    }
}

#[test]
fn resolve_rejects_clusters_without_known_labels() {
    let (x, truth) = two_blobs(20, 9.0, 4);
    let a = cop_kmeans_fit(&x, &[None; 20], 2, 0).unwrap();
    let mut known = vec![None; 20];
    known[0] = Some(Stability::from_index(truth[0]).unwrap());
    assert!(matches!(resolve_labels(&a, &known), Err(Error::Ambiguous(_))));
}

fn points() -> impl Strategy<Value = (DenseArray, Vec<Option<usize>>)> {
    (6usize..30, 1usize..4).prop_flat_map(|(n, m)| {
        (
            prop::collection::vec(-10.0f64..10.0, n * m),
            prop::collection::vec(prop::option::of(0usize..2), n),
        )
            .prop_map(move |(data, mut known)| {
                known[0] = Some(0);
                known[1] = Some(1);
                (DenseArray::matrix(n, m, data).unwrap(), known)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn memberships_stay_on_simplex_and_objective_descends((x, known) in points(), alpha in 0.0f64..5.0) {
        let cfg = SfcmConfig { alpha, tol: 0.0, max_iter: 25, ..Default::default() };
        let (state, assign) = sfcm_fit(&x, &known, &cfg).unwrap();
        let n = x.rows();
        for j in 0..n {
            let col: Vec<f64> = (0..2).map(|i| state.memberships.get(i, j)).collect();
            prop_assert!(col.iter().all(|u| (0.0..=1.0).contains(u)));
            prop_assert!((col.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        for w in assign.objective.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-9 * w[0].abs().max(1.0));
        }
    }

    #[test]
    fn translation_leaves_memberships_unchanged((x, known) in points(), shift in -50.0f64..50.0) {
        let cfg = SfcmConfig { max_iter: 30, ..Default::default() };
        let (a, _) = sfcm_fit(&x, &known, &cfg).unwrap();
        let moved = x.map(|v| v + shift);
        let (b, _) = sfcm_fit(&moved, &known, &cfg).unwrap();
        prop_assert!(a.memberships.max_abs_diff(&b.memberships) < 1e-9);
    }

    #[test]
    fn silhouette_is_bounded((x, _) in points(), seed in 0u64..1000) {
        let labels: Vec<usize> = (0..x.rows()).map(|j| ((j as u64 * 7 + seed) % 3) as usize).collect();
        let sc = silhouette(&x, &labels).unwrap();
        prop_assert!((-1.0..=1.0).contains(&sc));
    }
}
