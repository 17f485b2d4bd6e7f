use proptest::prelude::*;

use wmlp::evaluation::{
    auc, binary_reduce, classification_metrics, confusion_matrix, roc_curve, BinaryCounts,
};

fn labels() -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    (1usize..120).prop_flat_map(|n| {
        (
            proptest::collection::vec(0usize..3, n),
            proptest::collection::vec(0usize..3, n),
        )
    })
}

proptest! {
    #[test]
    fn binary_counts_match_per_sample_recount((truth, pred) in labels()) {
        let cm = confusion_matrix(&truth, &pred).unwrap();
        for c in 0..3 {
            let mut b = BinaryCounts { tp: 0, tn: 0, fp: 0, fn_: 0 };
            for (&t, &p) in truth.iter().zip(&pred) {
                match (t == c, p == c) {
                    (true, true) => b.tp += 1,
                    (false, false) => b.tn += 1,
                    (false, true) => b.fp += 1,
                    (true, false) => b.fn_ += 1,
                }
            }
            prop_assert_eq!(binary_reduce(&cm, c).unwrap(), b);
        }
    }

    #[test]
    fn macro_scores_are_bounded((truth, pred) in labels()) {
        let r = classification_metrics(&confusion_matrix(&truth, &pred).unwrap()).unwrap();
        for v in [r.accuracy, r.macro_precision, r.macro_recall, r.macro_f1] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        let lo = r.per_class.iter().map(|m| m.f1).fold(f64::INFINITY, f64::min);
        let hi = r.per_class.iter().map(|m| m.f1).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(lo - 1e-12 <= r.macro_f1 && r.macro_f1 <= hi + 1e-12);
    }

    #[test]
    fn reversing_distinct_scores_mirrors_auc(pos in proptest::collection::vec(any::<bool>(), 2..60)) {
        prop_assume!(pos.iter().any(|&p| p) && pos.iter().any(|&p| !p));
        let scores: Vec<f64> = (0..pos.len()).map(|i| ((i * 7919) % 101) as f64 + i as f64 * 1e-3).collect();
        let reversed: Vec<f64> = scores.iter().map(|s| -s).collect();
        let a = auc(&roc_curve(&pos, &scores).unwrap());
        let b = auc(&roc_curve(&pos, &reversed).unwrap());
        prop_assert!((a + b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn roc_is_monotone_with_fixed_endpoints(pos in proptest::collection::vec(any::<bool>(), 2..60), seed in 0u64..1000) {
        prop_assume!(pos.iter().any(|&p| p) && pos.iter().any(|&p| !p));
        let scores: Vec<f64> = (0..pos.len()).map(|i| ((i as u64 * 31 + seed) % 7) as f64).collect();
        let curve = roc_curve(&pos, &scores).unwrap();
        prop_assert_eq!(curve.points.first().copied(), Some((0.0, 0.0)));
        prop_assert_eq!(curve.points.last().copied(), Some((1.0, 1.0)));
        prop_assert!(curve.points.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 <= w[1].1));
    }
}

#[test]
fn auc_matches_pairwise_ranking_probability() {
    let pos = [true, false, true, true, false, false, true];
    let scores = [0.8, 0.3, 0.3, 0.9, 0.5, 0.1, 0.6];
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for i in 0..pos.len() {
        for j in 0..pos.len() {
            if pos[i] && !pos[j] {
                pairs += 1.0;
                wins += if scores[i] > scores[j] {
                    1.0
                } else if scores[i] == scores[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    let a = auc(&roc_curve(&pos, &scores).unwrap());
    assert!((a - wins / pairs).abs() < 1e-12);
}
