//! Scores against counts tallied independently from the definitions.

use grad_core::metrics::{score_classification, score_detection};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    // F1 = 2TP / (2TP + FP + FN), zero when undefined
    let den = 2 * tp + fp + fn_;
    if den == 0 || tp == 0 {
        0.0
    } else {
        2.0 * tp as f64 / den as f64
    }
}

#[test]
fn detection_scores_match_counting() {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    for _ in 0..1000 {
        let n = rng.random_range(1..300);
        let rate = rng.random_range(0.0..1.0);
        let truth: Vec<bool> = (0..n).map(|_| rng.random_bool(rate)).collect();
        let pred: Vec<bool> = (0..n).map(|_| rng.random_bool(rate)).collect();
        let count = |p: bool, t: bool| pred.iter().zip(&truth).filter(|(a, b)| **a == p && **b == t).count();
        let (tp, fp, fn_, tn) = (count(true, true), count(true, false), count(false, true), count(false, false));
        let s = score_detection(&pred, &truth).unwrap();
        assert_eq!((s.anomaly.tp, s.anomaly.fp, s.anomaly.fn_, s.anomaly.tn), (tp as u64, fp as u64, fn_ as u64, tn as u64));
        assert!((s.anomaly.f1 - f1(tp, fp, fn_)).abs() < 1e-12);
        assert!((s.normal.f1 - f1(tn, fn_, fp)).abs() < 1e-12);
        assert!((s.overall_f1() - (f1(tp, fp, fn_) + f1(tn, fn_, fp)) / 2.0).abs() < 1e-12);
    }
}

#[test]
fn classification_matches_counting() {
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    for _ in 0..1000 {
        let k = rng.random_range(2..5);
        let n = rng.random_range(1..200);
        let truth: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let pred: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let mut mask: Vec<bool> = (0..n).map(|_| rng.random_bool(0.7)).collect();
        mask[0] = true;
        let r = score_classification(&pred, &truth, &mask, k).unwrap();
        assert_eq!(r.matrix.total() as usize, mask.iter().filter(|&&m| m).count());
        for c in 0..k {
            let kept = || (0..n).filter(|&i| mask[i]);
            let tp = kept().filter(|&i| truth[i] == c && pred[i] == c).count();
            let fp = kept().filter(|&i| truth[i] != c && pred[i] == c).count();
            let fn_ = kept().filter(|&i| truth[i] == c && pred[i] != c).count();
            assert!((r.per_class[c].f1 - f1(tp, fp, fn_)).abs() < 1e-12);
        }
    }
}
