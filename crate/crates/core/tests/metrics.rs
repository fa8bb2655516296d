mod common;

use common::*;
use proptest::prelude::*;
use statrs::function::beta::beta_reg;
use tailaug::metrics::{inc_beta, macro_f1, ndcg_at_k, pooled_ttest, precision_at_k, student_t_two_tailed};

fn scores_and_truth() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (1usize..9).prop_flat_map(|l| {
        (
            proptest::collection::vec(-10.0f64..10.0, l),
            proptest::collection::vec(any::<bool>(), l),
        )
            .prop_filter("needs a relevant label", |(_, t)| t.iter().any(|&x| x))
    })
}

#[test]
fn incomplete_beta_matches_reference() {
    for &a in &[0.5, 1.0, 2.0, 2.5, 4.0, 10.0] {
        for &b in &[0.5, 1.0, 3.0, 7.5] {
            for i in 0..=20 {
                let x = f64::from(i) / 20.0;
                let ours = inc_beta(a, b, x);
                let reference = beta_reg(a, b, x);
                assert!((ours - reference).abs() < 1e-12, "I_{x}({a},{b}): {ours} vs {reference}");
            }
        }
    }
}

#[test]
fn t_distribution_tails() {
    assert!((student_t_two_tailed(0.0, 8.0) - 1.0).abs() < 1e-15);
    // Two-tailed 5% critical value for 8 degrees of freedom.
    assert!((student_t_two_tailed(2.306004135204166, 8.0) - 0.05).abs() < 1e-12);
}

#[test]
fn ranking_metrics_match_enumeration_oracle() {
    let scores = [0.2, 0.9, 0.9, 0.1, 0.5];
    let truth = [true, false, true, false, true];
    for k in 1..=5 {
        assert_eq!(precision_at_k(&scores, &truth, k).unwrap(), brute_precision(&scores, &truth, k));
        assert!((ndcg_at_k(&scores, &truth, k).unwrap() - brute_ndcg(&scores, &truth, k)).abs() < 1e-15);
    }
}

proptest! {
    #[test]
    fn p1_equals_ndcg1((scores, truth) in scores_and_truth()) {
        prop_assert_eq!(precision_at_k(&scores, &truth, 1).unwrap(), ndcg_at_k(&scores, &truth, 1).unwrap());
    }

    #[test]
    fn monotone_transform_invariance((scores, truth) in scores_and_truth(), k in 1usize..9) {
        let k = k.min(scores.len());
        let moved: Vec<f64> = scores.iter().map(|s| (0.3 * s).exp() * 2.0 + 1.0).collect();
        prop_assert_eq!(precision_at_k(&scores, &truth, k).unwrap(), precision_at_k(&moved, &truth, k).unwrap());
        prop_assert_eq!(ndcg_at_k(&scores, &truth, k).unwrap(), ndcg_at_k(&moved, &truth, k).unwrap());
    }

    #[test]
    fn ndcg_extremes((scores, truth) in scores_and_truth(), k in 1usize..9) {
        let k = k.min(scores.len());
        let relevant = truth.iter().filter(|&&t| t).count();
        let order = tailaug::metrics::ranking(&scores);
        let top = &order[..k];
        let hits = top.iter().filter(|&&l| truth[l]).count();
        let n = ndcg_at_k(&scores, &truth, k).unwrap();
        if hits == 0 {
            prop_assert_eq!(n, 0.0);
        }
        if top[..relevant.min(k)].iter().all(|&l| truth[l]) {
            prop_assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn macro_f1_is_permutation_invariant(
        rows in proptest::collection::vec(proptest::collection::vec(any::<(bool, bool)>(), 5), 1..12),
        shift in 0usize..5,
    ) {
        let preds: Vec<Vec<bool>> = rows.iter().map(|r| r.iter().map(|x| x.0).collect()).collect();
        let truth: Vec<Vec<bool>> = rows.iter().map(|r| r.iter().map(|x| x.1).collect()).collect();
        let perm = |v: &Vec<bool>| (0..5).map(|i| v[(i + shift) % 5]).collect::<Vec<_>>();
        let subset = [0, 2, 3];
        let moved: Vec<usize> = subset.iter().map(|&s| (s + 5 - shift) % 5).collect();
        let a = macro_f1(&preds, &truth, &subset).unwrap().macro_f1;
        let pp: Vec<Vec<bool>> = preds.iter().map(perm).collect();
        let tp: Vec<Vec<bool>> = truth.iter().map(perm).collect();
        let b = macro_f1(&pp, &tp, &moved).unwrap().macro_f1;
        prop_assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn ttest_is_symmetric(
        a in proptest::collection::vec(-100.0f64..100.0, 2..8),
        b in proptest::collection::vec(-100.0f64..100.0, 2..8),
    ) {
        let ab = pooled_ttest(&a, &b).unwrap();
        let ba = pooled_ttest(&b, &a).unwrap();
        prop_assert!((ab.p - ba.p).abs() < 1e-12);
        prop_assert!((ab.t.abs() - ba.t.abs()).abs() < 1e-9 * (1.0 + ab.t.abs()));
    }
}
