//! Slide-level evaluation: confusion-matrix metrics, MCC, ROC/AUC and the
//! `mean ± std` aggregation across folds.

mod confusion;
mod roc;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use confusion::{classification_metrics, confusion_at, mcc, ClassificationMetrics, ConfusionMatrix, DEFAULT_THRESHOLD};
pub use roc::{roc_auc, RocAuc, RocCurve, RocPoint};

use crate::cohort::Label;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub mcc: f64,
    pub auc: f64,
    pub confusion: ConfusionMatrix,
    pub n_pos: usize,
    pub n_neg: usize,
    pub threshold: f64,
}

impl MetricReport {
    /// All metrics for one scored evaluation set, plus its ROC curve.
    pub fn from_scores(scores: &[f64], labels: &[Label], threshold: f64) -> Result<(MetricReport, RocCurve)> {
        let RocAuc { curve, auc } = roc_auc(scores, labels)?;
        let confusion = confusion_at(scores, labels, threshold)?;
        let m = classification_metrics(&confusion)?;
        let n_pos = labels.iter().filter(|l| l.is_positive()).count();
        let report = MetricReport {
            accuracy: m.accuracy,
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
            mcc: mcc(&confusion)?,
            auc,
            confusion,
            n_pos,
            n_neg: labels.len() - n_pos,
            threshold,
        };
        Ok((report, curve))
    }

    /// `(name, value)` for every scalar metric, in report order.
    pub fn named_values(&self) -> [(&'static str, f64); 6] {
        [
            ("accuracy", self.accuracy),
            ("precision", self.precision),
            ("recall", self.recall),
            ("f1", self.f1),
            ("mcc", self.mcc),
            ("auc", self.auc),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator).
    pub std: f64,
    pub values: Vec<f64>,
    pub rendered: String,
}

impl MetricSummary {
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::contract(format!(
                "need at least 2 values for a sample std, got {}",
                values.len()
            )));
        }
        let n = values.len() as f64;
        let (mean, std) = if values.iter().all(|&v| v == values[0]) {
            // exact, instead of whatever rounding the sum leaves behind
            (values[0], 0.0)
        } else {
            let mean = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (mean, var.sqrt())
        };
        Ok(MetricSummary {
            mean,
            std,
            rendered: render_mean_std(mean, std),
            values,
        })
    }
}

/// `"0.933 ± 0.010"`-style rendering, three decimals.
pub fn render_mean_std(mean: f64, std: f64) -> String {
    format!("{mean:.3} ± {std:.3}")
}

/// Per-metric summaries across cross-validation folds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary {
    pub folds: usize,
    pub metrics: BTreeMap<String, MetricSummary>,
}

impl FoldSummary {
    pub fn get(&self, metric: &str) -> Option<&MetricSummary> {
        self.metrics.get(metric)
    }
}

pub fn aggregate_folds(reports: &[MetricReport]) -> Result<FoldSummary> {
    if reports.len() < 2 {
        return Err(Error::contract(format!(
            "aggregation needs at least 2 fold reports, got {}",
            reports.len()
        )));
    }
    let mut metrics = BTreeMap::new();
    for (k, (name, _)) in reports[0].named_values().iter().enumerate() {
        let values = reports.iter().map(|r| r.named_values()[k].1).collect();
        metrics.insert(name.to_string(), MetricSummary::from_values(values)?);
    }
    Ok(FoldSummary {
        folds: reports.len(),
        metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::{EgfrNeg as N, EgfrPos as P};

    fn report_with_auc(auc: f64) -> MetricReport {
        let (mut r, _) = MetricReport::from_scores(&[0.9, 0.2], &[P, N], 0.5).unwrap();
        r.auc = auc;
        r
    }

    #[test]
    fn rendering() {
        assert_eq!(render_mean_std(0.9330, 0.0100), "0.933 ± 0.010");
        assert_eq!(render_mean_std(0.969, 0.015), "0.969 ± 0.015");
    }

    #[test]
    fn identical_reports_have_zero_std() {
        let r = report_with_auc(0.8);
        let s = aggregate_folds(&[r.clone(), r.clone(), r]).unwrap();
        assert!(s.metrics.values().all(|m| m.std == 0.0));
        assert_eq!(s.folds, 3);
    }

    #[test]
    fn sample_std_of_fold_aucs() {
        let aucs = [0.92, 0.93, 0.94, 0.93, 0.945];
        let reports: Vec<_> = aucs.iter().map(|&a| report_with_auc(a)).collect();
        let s = aggregate_folds(&reports).unwrap();
        let auc = s.get("auc").unwrap();
        // mean = 4.665 / 5 = 0.933
        // squared deviations: 1.69e-4, 9e-6, 4.9e-5, 9e-6, 1.44e-4 -> 3.8e-4
        // std = sqrt(3.8e-4 / 4) = sqrt(9.5e-5)
        assert!((auc.mean - 0.933).abs() < 1e-12);
        assert!((auc.std - 9.5e-5f64.sqrt()).abs() < 1e-12);
        assert_eq!(auc.rendered, "0.933 ± 0.010");
        assert_eq!(auc.values, aucs);
    }

    #[test]
    fn needs_two_reports() {
        assert!(aggregate_folds(&[report_with_auc(0.5)]).is_err());
    }

    #[test]
    fn report_counts() {
        let scores = [0.9, 0.6, 0.55, 0.4, 0.3];
        let labels = [P, N, P, N, N];
        let (r, curve) = MetricReport::from_scores(&scores, &labels, 0.5).unwrap();
        assert_eq!((r.n_pos, r.n_neg), (2, 3));
        assert_eq!(r.confusion, ConfusionMatrix::new(2, 1, 2, 0));
        assert!((r.auc - 5.0 / 6.0).abs() < 1e-15);
        assert_eq!(curve.points.len(), 6);
    }
}
