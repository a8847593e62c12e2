//! Cohort-level protocol: stratified train/test split, k-fold
//! cross-validation on the training side, model selection by validation
//! accuracy, and evaluation on held-out and external sets.

mod split;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use split::{
    kfold, kfold_stratified, stratified_split, test_quotas, write_assignment_csv, FoldAssignment, SplitAssignment,
};

use crate::cohort::{Label, SlideManifest};
use crate::encoder::EmbeddingBag;
use crate::error::{Error, Result};
use crate::metrics::{aggregate_folds, FoldSummary, MetricReport, RocCurve, DEFAULT_THRESHOLD};
use crate::mil::{forward, train, AbmilParams, TrainConfig, TrainHistory};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Held-out test fraction.
    pub fraction: f64,
    pub k: usize,
    /// Seed of the split and fold shuffles.
    pub seed: u64,
    pub train: TrainConfig,
    pub threshold: f64,
    pub stratified_folds: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            fraction: 0.15,
            k: 5,
            seed: 0,
            train: TrainConfig::default(),
            threshold: DEFAULT_THRESHOLD,
            stratified_folds: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.fraction > 0.0 && self.fraction < 1.0) {
            return Err(Error::validation(None, format!("fraction must lie in (0, 1), got {}", self.fraction)));
        }
        if self.k < 2 {
            return Err(Error::validation(None, format!("k must be >= 2, got {}", self.k)));
        }
        if !self.threshold.is_finite() {
            return Err(Error::validation(None, "threshold must be finite"));
        }
        self.train.validate()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::validation(None, format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Outcome of one cross-validation fold.
#[derive(Clone, Debug, PartialEq)]
pub struct FoldResult {
    pub fold: usize,
    pub params: AbmilParams,
    pub history: TrainHistory,
    pub report: MetricReport,
    pub roc: RocCurve,
}

fn labeled<'a>(
    ids: &[String],
    bags: &'a BTreeMap<String, EmbeddingBag>,
    labels: &BTreeMap<String, Label>,
) -> Result<Vec<(EmbeddingBag, Label)>> {
    ids.iter()
        .map(|id| {
            let bag = bags.get(id).ok_or_else(|| Error::Data(format!("no embedding bag for slide {id}")))?;
            let label = labels.get(id).ok_or_else(|| Error::Data(format!("no label for slide {id}")))?;
            Ok((bag.clone(), *label))
        })
        .collect()
}

/// Trains one model per fold (fold `i` validates, the rest train) with seed
/// `config.seed + i`. Folds run in parallel; results come back in fold order.
pub fn run_cv(
    bags: &BTreeMap<String, EmbeddingBag>,
    labels: &BTreeMap<String, Label>,
    folds: &FoldAssignment,
    config: &TrainConfig,
    threshold: f64,
) -> Result<Vec<FoldResult>> {
    // surface missing data before any training starts
    labeled(folds.ids(), bags, labels)?;
    (0..folds.k)
        .into_par_iter()
        .map(|i| {
            let train_set = labeled(&folds.complement(i), bags, labels)?;
            let val_set = labeled(&folds.members(i), bags, labels)?;
            let cfg = TrainConfig {
                seed: config.seed.wrapping_add(i as u64),
                ..*config
            };
            let outcome = train(&train_set, &val_set, &cfg)?;
            let (report, roc) = evaluate_holdout(&outcome.params, &val_set, threshold)?;
            Ok(FoldResult {
                fold: i,
                params: outcome.params,
                history: outcome.history,
                report,
                roc,
            })
        })
        .collect()
}

/// Index of the highest validation accuracy, lowest index on ties.
pub fn select_best(reports: &[MetricReport]) -> Result<usize> {
    if reports.is_empty() {
        return Err(Error::contract("no fold results to select from"));
    }
    Ok(reports
        .iter()
        .enumerate()
        .fold(0, |best, (i, r)| if r.accuracy > reports[best].accuracy { i } else { best }))
}

pub fn predict_scores(params: &AbmilParams, bags: &[(EmbeddingBag, Label)]) -> Result<Vec<f64>> {
    bags.iter().map(|(b, _)| forward(b, params).map(|p| p.prob)).collect()
}

/// Scores every bag and assembles the metric report. Needs both classes.
pub fn evaluate_holdout(
    params: &AbmilParams,
    bags: &[(EmbeddingBag, Label)],
    threshold: f64,
) -> Result<(MetricReport, RocCurve)> {
    if bags.is_empty() {
        return Err(Error::contract("empty evaluation set"));
    }
    let scores = predict_scores(params, bags)?;
    let labels: Vec<Label> = bags.iter().map(|(_, l)| *l).collect();
    MetricReport::from_scores(&scores, &labels, threshold)
}

/// A labelled evaluation result with its ROC curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub report: MetricReport,
    pub roc: RocCurve,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldEntry {
    pub fold: usize,
    pub stopped_epoch: usize,
    pub best_epoch: usize,
    pub report: MetricReport,
}

/// Everything `report.json` holds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub n_train: usize,
    pub n_test: usize,
    pub folds: Vec<FoldEntry>,
    /// Validation metrics aggregated across folds.
    pub cv_summary: FoldSummary,
    pub best_fold: usize,
    pub holdout: Evaluation,
    pub external: Option<Evaluation>,
}

/// In-memory result of [`run_experiment`].
#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub split: SplitAssignment,
    pub folds: FoldAssignment,
    pub fold_results: Vec<FoldResult>,
    pub report: ExperimentReport,
}

impl ExperimentOutcome {
    pub fn best_params(&self) -> &AbmilParams {
        &self.fold_results[self.report.best_fold].params
    }
}

pub fn manifest_labels(manifest: &SlideManifest) -> BTreeMap<String, Label> {
    manifest.records().iter().map(|r| (r.slide_id.clone(), r.label)).collect()
}

/// A cohort evaluated with an already trained model.
pub struct ExternalSet<'a> {
    pub manifest: &'a SlideManifest,
    pub bags: &'a BTreeMap<String, EmbeddingBag>,
}

/// split → folds → per-fold training → selection → held-out (and optional
/// external) evaluation.
pub fn run_experiment(
    manifest: &SlideManifest,
    bags: &BTreeMap<String, EmbeddingBag>,
    config: &ExperimentConfig,
    external: Option<ExternalSet<'_>>,
) -> Result<ExperimentOutcome> {
    config.validate()?;
    let labels = manifest_labels(manifest);
    let split = stratified_split(manifest, config.fraction, config.seed)?;
    let folds = if config.stratified_folds {
        kfold_stratified(&split.train_ids, &labels, config.k, config.seed)?
    } else {
        kfold(&split.train_ids, config.k, config.seed)?
    };
    let fold_results = run_cv(bags, &labels, &folds, &config.train, config.threshold)?;
    let reports: Vec<MetricReport> = fold_results.iter().map(|f| f.report.clone()).collect();
    let cv_summary = aggregate_folds(&reports)?;
    let best_fold = select_best(&reports)?;
    let best = &fold_results[best_fold].params;

    let test_set = labeled(&split.test_ids, bags, &labels)?;
    let (report, roc) = evaluate_holdout(best, &test_set, config.threshold)?;
    let holdout = Evaluation { report, roc };

    let external = match external {
        Some(ext) => {
            let ext_labels = manifest_labels(ext.manifest);
            let ids: Vec<String> = ext.manifest.ids().map(str::to_string).collect();
            let set = labeled(&ids, ext.bags, &ext_labels)?;
            let (report, roc) = evaluate_holdout(best, &set, config.threshold)?;
            Some(Evaluation { report, roc })
        }
        None => None,
    };

    let folds_summary = fold_results
        .iter()
        .map(|f| FoldEntry {
            fold: f.fold,
            stopped_epoch: f.history.stopped_epoch,
            best_epoch: f.history.best_epoch,
            report: f.report.clone(),
        })
        .collect();
    let report = ExperimentReport {
        config: *config,
        n_train: split.train_ids.len(),
        n_test: split.test_ids.len(),
        folds: folds_summary,
        cv_summary,
        best_fold,
        holdout,
        external,
    };
    Ok(ExperimentOutcome {
        split,
        folds,
        fold_results,
        report,
    })
}
