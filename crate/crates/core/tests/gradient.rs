//! Analytic gradients against central finite differences.

use slide_mil::cohort::Label;
use slide_mil::encoder::EmbeddingBag;
use slide_mil::mil::{grad, AbmilParams};
use slide_mil::rng::{seeded, signed_unit_f64, unit_f64};

const STEP: f64 = 1e-3;
/// Denominator floor. Below it the O(step^2) truncation of the central
/// difference (about 1e-10 here) would dominate a pure ratio, so tiny
/// gradients are compared absolutely.
const FLOOR: f64 = 1e-5;

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

struct Instance {
    bag: EmbeddingBag,
    label: Label,
    params: AbmilParams,
}

fn instance(seed: u64, n: usize, dim: usize, hidden: usize) -> Instance {
    let mut rng = seeded(seed);
    let rows: Vec<Vec<f32>> = (0..n)
        .map(|_| (0..dim).map(|_| (1.5 * signed_unit_f64(&mut rng)) as f32).collect())
        .collect();
    let label = if unit_f64(&mut rng) < 0.5 { Label::EgfrPos } else { Label::EgfrNeg };
    let mut params = AbmilParams::init_with(dim, hidden, &mut rng).unwrap();
    // a nonzero bias exercises that coordinate too
    params.b = 0.5 * signed_unit_f64(&mut rng);
    Instance {
        bag: EmbeddingBag::from_rows(format!("fd{seed}"), &rows).unwrap(),
        label,
        params,
    }
}

fn loss(inst: &Instance, params: &AbmilParams) -> f64 {
    grad(&inst.bag, inst.label, params).unwrap().loss
}

/// Largest relative error over every parameter coordinate.
fn max_relative_error(inst: &Instance) -> f64 {
    let analytic = grad(&inst.bag, inst.label, &inst.params).unwrap().grads;
    let flat: Vec<f64> = analytic.tensors().iter().flat_map(|t| t.iter().copied()).collect();
    let mut worst = 0.0f64;
    let mut idx = 0;
    for t in 0..5 {
        let len = inst.params.tensors()[t].len();
        for i in 0..len {
            let mut plus = inst.params.clone();
            plus.tensors_mut()[t][i] += STEP;
            let mut minus = inst.params.clone();
            minus.tensors_mut()[t][i] -= STEP;
            let numeric = (loss(inst, &plus) - loss(inst, &minus)) / (2.0 * STEP);
            worst = worst.max(relative_error(flat[idx], numeric));
            idx += 1;
        }
    }
    assert_eq!(idx, inst.params.num_values());
    worst
}

#[test]
fn small_fixed_instance() {
    let inst = instance(0, 4, 6, 3);
    let err = max_relative_error(&inst);
    assert!(err < 1e-4, "max relative error {err:e}");
}

#[test]
fn hundred_random_instances() {
    let mut shapes = seeded(77);
    let mut worst = 0.0f64;
    for seed in 0..100u64 {
        let n = 1 + (unit_f64(&mut shapes) * 8.0) as usize;
        let dim = 1 + (unit_f64(&mut shapes) * 8.0) as usize;
        let hidden = 1 + (unit_f64(&mut shapes) * 4.0) as usize;
        let err = max_relative_error(&instance(1000 + seed, n, dim, hidden));
        assert!(err < 1e-4, "seed {seed} (n={n}, D={dim}, H={hidden}): {err:e}");
        worst = worst.max(err);
    }
    eprintln!("worst relative error over 100 instances: {worst:e}");
}

#[test]
fn relative_error_floor() {
    assert_eq!(relative_error(0.0, 0.0), 0.0);
    assert!((relative_error(1.0, 1.0001) - 1e-4 / 1.0001).abs() < 1e-12);
    assert!((relative_error(0.0, 1e-9) - 1e-4).abs() < 1e-18);
}

