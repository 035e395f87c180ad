#[path = "support/fixtures.rs"]
mod fixtures;

use dlban_core::datagen::Stability;
use dlban_core::metrics::{confusion_matrix, evaluate, roc_auc, scalar_metrics, ConfusionCounts};
use proptest::prelude::*;

#[test]
fn published_counts() {
    let m = scalar_metrics(&ConfusionCounts { tp: 1368, fn_: 15, fp: 0, tn: 1277 }).unwrap();
    assert!((m.accuracy - 0.9944).abs() < 5e-4);
    assert!((m.f1 - 0.9945).abs() < 5e-4);
    assert!((m.mcc - 0.9888).abs() < 5e-4);
    assert_eq!(m.misdetection_rate, 0.0);
    assert!((m.false_alarm_rate - 15.0 / 1383.0).abs() < 1e-15);
}

fn labels() -> impl Strategy<Value = Vec<Stability>> {
    prop::collection::vec(prop::bool::ANY.prop_map(|b| if b { Stability::Stable } else { Stability::Unstable }), 2..60)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn auc_equals_pair_counting(truth in labels(), raw in prop::collection::vec(0u8..8, 60)) {
        prop_assume!(truth.contains(&Stability::Stable) && truth.contains(&Stability::Unstable));
        // coarse scores so ties are common
        let scores: Vec<f64> = raw[..truth.len()].iter().map(|&s| s as f64 / 8.0).collect();
        let (roc, auc) = roc_auc(&scores, &truth).unwrap();
        prop_assert!((auc - fixtures::pair_count_auc(&scores, &truth)).abs() < 1e-12);
        prop_assert_eq!(roc.first().map(|p| (p.fpr, p.tpr)), Some((0.0, 0.0)));
        prop_assert_eq!(roc.last().map(|p| (p.fpr, p.tpr)), Some((1.0, 1.0)));
        prop_assert!(roc.windows(2).all(|w| w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr));
    }

    #[test]
    fn scalar_metrics_are_bounded_and_consistent(truth in labels(), pred in labels()) {
        let n = truth.len().min(pred.len());
        let c = confusion_matrix(&truth[..n], &pred[..n]).unwrap();
        prop_assert_eq!(c.total() as usize, n);
        let m = scalar_metrics(&c).unwrap();
        for v in [m.accuracy, m.precision, m.recall, m.f1, m.misdetection_rate, m.false_alarm_rate] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert!((-1.0..=1.0).contains(&m.mcc));
        // MCC is symmetric in the class roles
        prop_assert!((scalar_metrics(&c.swapped()).unwrap().mcc - m.mcc).abs() < 1e-12);
        let scores: Vec<f64> = pred[..n].iter().map(|p| p.index() as f64).collect();
        if truth[..n].contains(&Stability::Stable) && truth[..n].contains(&Stability::Unstable) {
            let r = evaluate(&truth[..n], &pred[..n], &scores).unwrap();
            prop_assert_eq!(r.counts, c);
        }
    }
}
