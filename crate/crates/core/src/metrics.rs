//! Per-class precision/recall/F1 and confusion matrices.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("prediction length {pred} does not match truth length {truth}")]
    LengthMismatch { pred: usize, truth: usize },
    #[error("no steps selected for evaluation")]
    EmptyMask,
    #[error("label {0} is not in the class list")]
    UnknownClass(usize),
}

/// One-vs-rest counts and derived scores for a single class.
///
/// Zero denominators yield 0 and set `undefined`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Some ratio had a zero denominator.
    pub undefined: bool,
}

impl ClassMetrics {
    pub fn from_counts(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        let mut undefined = false;
        let mut ratio = |num: u64, den: u64| {
            if den == 0 {
                undefined = true;
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self { tp, fp, fn_, tn, precision, recall, f1, undefined }
    }

    pub fn support(&self) -> u64 {
        self.tp + self.fn_
    }
}

/// Detection scores for the normal (negative) and anomaly (positive) classes.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DetectionScores {
    pub normal: ClassMetrics,
    pub anomaly: ClassMetrics,
}

impl DetectionScores {
    /// Mean of the two class F1 scores.
    pub fn overall_f1(&self) -> f64 {
        0.5 * (self.normal.f1 + self.anomaly.f1)
    }
}

/// Scores binary detection; `true` means anomaly.
pub fn score_detection(pred: &[bool], truth: &[bool]) -> Result<DetectionScores, MetricsError> {
    if pred.len() != truth.len() {
        return Err(MetricsError::LengthMismatch { pred: pred.len(), truth: truth.len() });
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0u64, 0u64, 0u64, 0u64);
    for (&p, &t) in pred.iter().zip(truth) {
        match (p, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    Ok(DetectionScores {
        anomaly: ClassMetrics::from_counts(tp, fp, fn_, tn),
        normal: ClassMetrics::from_counts(tn, fn_, fp, tp),
    })
}

/// Square count matrix indexed by `(true class, predicted class)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: usize,
    pub counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self { classes, counts: vec![0; classes * classes] }
    }

    pub fn add(&mut self, truth: usize, pred: usize) {
        self.counts[truth * self.classes + pred] += 1;
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.classes + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// One-vs-rest metrics for `class`.
    pub fn class_metrics(&self, class: usize) -> ClassMetrics {
        let tp = self.get(class, class);
        let fp: u64 = (0..self.classes).filter(|&t| t != class).map(|t| self.get(t, class)).sum();
        let fn_: u64 = (0..self.classes).filter(|&p| p != class).map(|p| self.get(class, p)).sum();
        let tn = self.total() - tp - fp - fn_;
        ClassMetrics::from_counts(tp, fp, fn_, tn)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub matrix: ConfusionMatrix,
    pub per_class: Vec<ClassMetrics>,
}

/// Multi-class scoring over steps where `mask` is set (typically the true
/// anomalies). Labels are class indices in `0..classes`.
pub fn score_classification(
    pred: &[usize],
    truth: &[usize],
    mask: &[bool],
    classes: usize,
) -> Result<ClassificationReport, MetricsError> {
    if pred.len() != truth.len() {
        return Err(MetricsError::LengthMismatch { pred: pred.len(), truth: truth.len() });
    }
    if mask.len() != truth.len() {
        return Err(MetricsError::LengthMismatch { pred: mask.len(), truth: truth.len() });
    }
    let mut matrix = ConfusionMatrix::new(classes);
    for i in (0..truth.len()).filter(|&i| mask[i]) {
        let (t, p) = (truth[i], pred[i]);
        if t >= classes {
            return Err(MetricsError::UnknownClass(t));
        }
        if p >= classes {
            return Err(MetricsError::UnknownClass(p));
        }
        matrix.add(t, p);
    }
    if matrix.total() == 0 {
        return Err(MetricsError::EmptyMask);
    }
    let per_class = (0..classes).map(|c| matrix.class_metrics(c)).collect();
    Ok(ClassificationReport { matrix, per_class })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_detection() {
        let truth = [true, false, false, true];
        let s = score_detection(&truth, &truth).unwrap();
        for m in [s.normal, s.anomaly] {
            assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
        }
    }

    #[test]
    fn counts_arithmetic() {
        let m = ClassMetrics::from_counts(8, 2, 2, 0);
        assert!((m.precision - 0.8).abs() < 1e-15);
        assert!((m.recall - 0.8).abs() < 1e-15);
        assert!((m.f1 - 0.8).abs() < 1e-15);
        assert!(!m.undefined);
    }

    #[test]
    fn zero_denominators_flagged() {
        let m = ClassMetrics::from_counts(0, 0, 0, 5);
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
        assert!(m.undefined);
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(
            score_detection(&[true], &[true, false]),
            Err(MetricsError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn diagonal_and_swap() {
        let truth = [0, 1, 1, 0];
        let mask = [true; 4];
        let r = score_classification(&truth, &truth, &mask, 2).unwrap();
        assert_eq!(r.matrix.counts, vec![2, 0, 0, 2]);
        let swapped = [1, 0, 0, 1];
        let r = score_classification(&swapped, &truth, &mask, 2).unwrap();
        assert_eq!(r.matrix.counts, vec![0, 2, 2, 0]);
        assert_eq!(r.per_class[0].f1, 0.0);
    }

    #[test]
    fn empty_mask_rejected() {
        assert_eq!(score_classification(&[0], &[0], &[false], 2), Err(MetricsError::EmptyMask));
    }

    #[test]
    fn hand_tallied_fixture() {
        // truth: 0 0 0 1 1 2 2 2 2 ; pred: 0 1 0 1 2 2 2 0 2
        let truth = [0, 0, 0, 1, 1, 2, 2, 2, 2];
        let pred = [0, 1, 0, 1, 2, 2, 2, 0, 2];
        let r = score_classification(&pred, &truth, &[true; 9], 3).unwrap();
        assert_eq!(r.matrix.counts, vec![2, 1, 0, 0, 1, 1, 1, 0, 3]);
        assert_eq!(r.matrix.total(), 9);
        let c2 = r.per_class[2];
        assert_eq!((c2.tp, c2.fp, c2.fn_, c2.tn), (3, 1, 1, 4));
    }
}
