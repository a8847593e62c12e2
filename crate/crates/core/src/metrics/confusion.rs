use serde::{Deserialize, Serialize};

use crate::cohort::Label;
use crate::error::{Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        ConfusionMatrix { tp, fp, tn, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// Same matrix with the roles of the two classes exchanged.
    pub fn swapped(&self) -> Self {
        ConfusionMatrix {
            tp: self.tn,
            fp: self.fn_,
            tn: self.tp,
            fn_: self.fp,
        }
    }
}

/// Counts predictions with "positive iff score >= threshold".
pub fn confusion_at(scores: &[f64], labels: &[Label], threshold: f64) -> Result<ConfusionMatrix> {
    if scores.len() != labels.len() {
        return Err(Error::contract(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::contract("confusion matrix needs at least one score"));
    }
    let mut cm = ConfusionMatrix::default();
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= threshold, l.is_positive()) {
            (true, true) => cm.tp += 1,
            (true, false) => cm.fp += 1,
            (false, false) => cm.tn += 1,
            (false, true) => cm.fn_ += 1,
        }
    }
    Ok(cm)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Accuracy, precision, recall and F1; any 0/0 ratio is 0.
pub fn classification_metrics(cm: &ConfusionMatrix) -> Result<ClassificationMetrics> {
    if cm.total() == 0 {
        return Err(Error::contract("empty confusion matrix"));
    }
    Ok(ClassificationMetrics {
        accuracy: ratio(cm.tp + cm.tn, cm.total()),
        precision: ratio(cm.tp, cm.tp + cm.fp),
        recall: ratio(cm.tp, cm.tp + cm.fn_),
        f1: ratio(2 * cm.tp, 2 * cm.tp + cm.fp + cm.fn_),
    })
}

/// Matthews correlation coefficient, 0 when any marginal is empty.
pub fn mcc(cm: &ConfusionMatrix) -> Result<f64> {
    if cm.total() == 0 {
        return Err(Error::contract("empty confusion matrix"));
    }
    let factors = [cm.tp + cm.fp, cm.tp + cm.fn_, cm.tn + cm.fp, cm.tn + cm.fn_];
    if factors.contains(&0) {
        return Ok(0.0);
    }
    let num = cm.tp as i128 * cm.tn as i128 - cm.fp as i128 * cm.fn_ as i128;
    let den = factors
        .iter()
        .try_fold(1u128, |acc, &f| acc.checked_mul(f as u128))
        .map(|p| (p as f64).sqrt())
        .unwrap_or_else(|| (factors.iter().map(|&f| (f as f64).ln()).sum::<f64>() / 2.0).exp());
    Ok((num as f64 / den).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::{EgfrNeg as N, EgfrPos as P};

    #[test]
    fn confusion_examples() {
        assert_eq!(confusion_at(&[0.9, 0.1], &[P, N], 0.5).unwrap(), ConfusionMatrix::new(1, 0, 1, 0));
        let at = confusion_at(&[0.5, 0.5, 0.5], &[P, N, N], 0.5).unwrap();
        assert_eq!(at, ConfusionMatrix::new(1, 2, 0, 0));
        let cm = confusion_at(&[0.6, 0.4, 0.7, 0.2], &[P, P, N, N], 0.5).unwrap();
        assert_eq!(cm, ConfusionMatrix::new(1, 1, 1, 1));
        assert!(confusion_at(&[0.1], &[P, N], 0.5).is_err());
        assert!(confusion_at(&[], &[], 0.5).is_err());
    }

    #[test]
    fn perfect_and_degenerate() {
        let m = classification_metrics(&ConfusionMatrix::new(16, 0, 14, 0)).unwrap();
        assert_eq!((m.accuracy, m.precision, m.recall, m.f1), (1.0, 1.0, 1.0, 1.0));
        assert_eq!(mcc(&ConfusionMatrix::new(16, 0, 14, 0)).unwrap(), 1.0);

        let none = classification_metrics(&ConfusionMatrix::new(0, 0, 10, 5)).unwrap();
        assert_eq!((none.precision, none.f1, none.recall), (0.0, 0.0, 0.0));

        // everything predicted positive
        assert_eq!(mcc(&ConfusionMatrix::new(7, 3, 0, 0)).unwrap(), 0.0);
        assert!(mcc(&ConfusionMatrix::default()).is_err());
    }

    #[test]
    fn hand_computed_case() {
        let cm = ConfusionMatrix::new(14, 2, 12, 2);
        let m = classification_metrics(&cm).unwrap();
        assert_eq!(m.accuracy, 26.0 / 30.0);
        assert_eq!(m.precision, 14.0 / 16.0);
        assert_eq!(m.recall, 14.0 / 16.0);
        assert!((m.f1 - 0.875).abs() < 1e-15);
        // (168 - 4) / sqrt(16 * 16 * 14 * 14) = 164 / 224
        assert!((mcc(&cm).unwrap() - 164.0 / 224.0).abs() < 1e-15);
    }

    #[test]
    fn mcc_survives_huge_counts() {
        let big = 1u64 << 40;
        let v = mcc(&ConfusionMatrix::new(big, 1, big, 1)).unwrap();
        assert!((v - 1.0).abs() < 1e-9);
        assert_eq!(mcc(&ConfusionMatrix::new(big, big, big, big)).unwrap(), 0.0);
    }

    #[test]
    fn json_uses_fn_key() {
        let s = serde_json::to_string(&ConfusionMatrix::new(1, 2, 3, 4)).unwrap();
        assert_eq!(s, r#"{"tp":1,"fp":2,"tn":3,"fn":4}"#);
    }
}
