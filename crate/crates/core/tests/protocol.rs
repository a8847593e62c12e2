use std::collections::BTreeSet;

use slide_mil::cohort::{Label, SlideManifest, SlideRecord, Variant};
use slide_mil::experiment::{kfold, stratified_split};
use slide_mil::mil::{run_epochs, EarlyStopping};
use slide_mil::preprocess::build_tile_grid;
use slide_mil::Error;

/// 110 EGFR, 60 ALK, 20 ROS1, 10 triple negative.
fn cohort_of_200() -> SlideManifest {
    let counts = [(Variant::Egfr, 110), (Variant::Alk, 60), (Variant::Ros1, 20), (Variant::TripleNeg, 10)];
    let records = counts
        .iter()
        .flat_map(|&(v, n)| (0..n).map(move |i| (v, i)))
        .enumerate()
        .map(|(k, (v, i))| SlideRecord::new(format!("{v}_{i:03}"), format!("s{k}.png"), v, 40.0, 0.25))
        .collect();
    SlideManifest::from_records(records).unwrap()
}

#[test]
fn split_counts_match_the_cohort_table() {
    let m = cohort_of_200();
    assert_eq!(m.class_counts().get(Label::EgfrPos), 110);
    for seed in 0..100 {
        let s = stratified_split(&m, 0.15, seed).unwrap();
        let pos = |ids: &[String]| ids.iter().filter(|id| m.get(id).unwrap().label.is_positive()).count();
        assert_eq!((s.train_ids.len(), pos(&s.train_ids)), (170, 94), "seed {seed}");
        assert_eq!((s.test_ids.len(), pos(&s.test_ids)), (30, 16), "seed {seed}");
        let all: BTreeSet<&String> = s.train_ids.iter().chain(&s.test_ids).collect();
        assert_eq!(all.len(), 200);
    }
}

#[test]
fn five_folds_over_170() {
    let m = cohort_of_200();
    let s = stratified_split(&m, 0.15, 0).unwrap();
    let f = kfold(&s.train_ids, 5, 0).unwrap();
    assert_eq!(f.sizes(), vec![34; 5]);
    for i in 0..5 {
        assert_eq!(f.complement(i).len(), 136);
    }
}

#[test]
fn tile_grid_of_a_typical_slide() {
    assert_eq!(build_tile_grid((12800, 10240), 256).unwrap().len(), 2000);
    // partial edge tiles are dropped
    assert_eq!(build_tile_grid((12800 + 255, 10240 + 255), 256).unwrap().len(), 2000);
}

#[test]
fn flat_validation_loss_stops_after_patience() {
    let losses = [0.9, 0.7, 0.7, 0.7, 0.7, 0.7, 0.7, 0.7, 0.7, 0.7, 0.7, 0.7];
    let (history, best) = run_epochs(50, 8, |e| Ok((1.0, losses[e - 1], e))).unwrap();
    assert_eq!(history.stopped_epoch, 10);
    assert_eq!(history.best_epoch, 2);
    assert_eq!(best, Some(2));
    assert_eq!(history.epochs.len(), 10);

    let mut es = EarlyStopping::new(8);
    let stops: Vec<bool> = losses.iter().enumerate().map(|(i, &l)| es.observe(i + 1, l).stop).collect();
    assert_eq!(stops.iter().position(|&s| s), Some(9));
}

#[test]
fn diverging_loss_reports_history() {
    let losses = [0.9, 0.8, f64::NAN];
    match run_epochs(50, 8, |e| Ok((1.0, losses[e - 1], ()))) {
        Err(Error::Diverged { epoch, history }) => {
            assert_eq!(epoch, 3);
            // the offending epoch is kept so the trace shows where it blew up
            assert_eq!(history.epochs.len(), 3);
            assert!(history.epochs[2].val_loss.is_nan());
            assert_eq!(history.best_epoch, 2);
        }
        other => panic!("unexpected {other:?}"),
    }
}
