//! End-to-end learning on synthetic cohorts with planted witness instances.
//! Every run is seeded; the seeds below are fixed regression points.

use std::collections::BTreeMap;

use slide_mil::encoder::EmbeddingBag;
use slide_mil::experiment::{evaluate_holdout, run_experiment, ExperimentConfig};
use slide_mil::mil::{forward, train, TrainConfig};
use slide_mil::synth::{generate_bags, SynthBagSpec, SynthCohort};

fn cohort(seed: u64, signal_strength: f64) -> SynthCohort {
    generate_bags(&SynthBagSpec {
        seed,
        signal_strength,
        ..Default::default()
    })
    .unwrap()
}

fn bag_map(c: &SynthCohort) -> BTreeMap<String, EmbeddingBag> {
    c.bags.iter().map(|b| (b.bag.slide_id.clone(), b.bag.clone())).collect()
}

#[test]
fn separable_bags_train_and_attend() {
    let c = cohort(2, 4.0);
    let labeled = c.labeled();
    let (train_set, val_set) = labeled.split_at(80);
    let out = train(train_set, val_set, &TrainConfig { seed: 2, ..Default::default() }).unwrap();
    let (report, _) = evaluate_holdout(&out.params, val_set, 0.5).unwrap();
    assert!(report.auc >= 0.95, "validation AUC {}", report.auc);
    assert_eq!(out.history.best().unwrap().epoch, out.history.best_epoch);

    // planted instances get more than their uniform share of attention
    let positives: Vec<_> = c.bags.iter().filter(|b| b.label.is_positive()).collect();
    let above = positives
        .iter()
        .filter(|b| {
            let a = forward(&b.bag, &out.params).unwrap().attention;
            let mass: f64 = b.signal_rows.iter().map(|&k| a[k]).sum();
            mass > b.signal_rows.len() as f64 / b.bag.n() as f64
        })
        .count();
    assert!(
        above as f64 >= 0.9 * positives.len() as f64,
        "{above}/{} positive bags",
        positives.len()
    );
}

#[test]
fn cross_validation_on_separable_cohort() {
    let c = cohort(8, 4.0);
    let config = ExperimentConfig {
        seed: 8,
        train: TrainConfig {
            seed: 8,
            learning_rate: 1e-3,
            ..Default::default()
        },
        ..Default::default()
    };
    let out = run_experiment(&c.manifest(), &bag_map(&c), &config, None).unwrap();
    let auc = out.report.cv_summary.get("auc").unwrap();
    assert!(auc.mean >= 0.95, "mean CV AUC {}", auc.rendered);
    assert_eq!((out.report.n_train, out.report.n_test), (85, 15));
    assert_eq!(out.report.folds.len(), 5);
}

#[test]
fn experiment_is_deterministic() {
    let c = cohort(1, 4.0);
    let config = ExperimentConfig {
        seed: 1,
        train: TrainConfig {
            seed: 1,
            max_epochs: 5,
            ..Default::default()
        },
        ..Default::default()
    };
    let a = run_experiment(&c.manifest(), &bag_map(&c), &config, None).unwrap();
    let b = run_experiment(&c.manifest(), &bag_map(&c), &config, None).unwrap();
    assert_eq!(a.report, b.report);
    assert_eq!(
        serde_json::to_string(&a.report).unwrap(),
        serde_json::to_string(&b.report).unwrap()
    );
}
