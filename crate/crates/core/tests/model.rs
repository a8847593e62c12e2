use rand::seq::SliceRandom;
use slide_mil::cohort::Label;
use slide_mil::encoder::EmbeddingBag;
use slide_mil::mil::{adam_step, forward, grad, AbmilParams, AdamConfig, AdamState};
use slide_mil::rng::{seeded, signed_unit_f64, unit_f64};

fn random_bag(rng: &mut impl rand::RngCore, n: usize, dim: usize, scale: f64) -> EmbeddingBag {
    let rows: Vec<Vec<f32>> = (0..n)
        .map(|_| (0..dim).map(|_| (scale * signed_unit_f64(rng)) as f32).collect())
        .collect();
    EmbeddingBag::from_rows("bag", &rows).unwrap()
}

fn range(rng: &mut impl rand::RngCore, lo: usize, hi: usize) -> usize {
    lo + (unit_f64(rng) * (hi - lo + 1) as f64) as usize
}

/// Scalar loops, no ndarray, plain `exp` based logistic.
fn naive_forward(bag: &EmbeddingBag, p: &AbmilParams) -> (f64, Vec<f64>) {
    let (n, d, h) = (bag.n(), bag.dim(), p.hidden());
    let x = |k: usize, j: usize| bag.matrix[[k, j]] as f64;
    let logistic = |t: f64| 1.0 / (1.0 + (-t).exp());
    let mut scores = vec![0.0; n];
    for (k, score) in scores.iter_mut().enumerate() {
        for i in 0..h {
            let (mut pv, mut pu) = (0.0, 0.0);
            for j in 0..d {
                pv += p.v[[i, j]] * x(k, j);
                pu += p.u[[i, j]] * x(k, j);
            }
            *score += p.w[i] * pv.tanh() * logistic(pu);
        }
    }
    let top = scores.iter().cloned().fold(f64::MIN, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - top).exp()).collect();
    let total: f64 = exps.iter().sum();
    let attention: Vec<f64> = exps.iter().map(|e| e / total).collect();
    let mut logit = p.b;
    for j in 0..d {
        let z: f64 = (0..n).map(|k| attention[k] * x(k, j)).sum();
        logit += p.c[j] * z;
    }
    (logistic(logit), attention)
}

#[test]
fn forward_matches_scalar_loops() {
    let mut rng = seeded(4);
    for seed in 0..300 {
        let (n, d, h) = (range(&mut rng, 1, 30), range(&mut rng, 1, 12), range(&mut rng, 1, 8));
        let bag = random_bag(&mut rng, n, d, 3.0);
        let p = AbmilParams::init(d, h, seed).unwrap();
        let out = forward(&bag, &p).unwrap();
        let (prob, attention) = naive_forward(&bag, &p);
        assert!((out.prob - prob).abs() < 1e-12, "seed {seed}: {} vs {prob}", out.prob);
        for (a, b) in out.attention.iter().zip(&attention) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn permutation_invariance_and_simplex() {
    let mut rng = seeded(11);
    let mut worst = 0.0f64;
    for seed in 0..1000u64 {
        let (n, d, h) = (range(&mut rng, 1, 60), range(&mut rng, 1, 24), range(&mut rng, 1, 16));
        let bag = random_bag(&mut rng, n, d, 2.0);
        let p = AbmilParams::init(d, h, seed).unwrap();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let a = forward(&bag, &p).unwrap();
        let b = forward(&bag.permuted(&perm), &p).unwrap();
        worst = worst.max((a.prob - b.prob).abs());
        assert!((a.prob - b.prob).abs() <= 1e-6);
        for out in [&a, &b] {
            assert!((out.attention.sum() - 1.0).abs() <= 1e-6);
            assert!(out.attention.iter().all(|&w| w >= 0.0));
        }
        // row k of the permuted bag is row perm[k] of the original
        for (k, &src) in perm.iter().enumerate() {
            assert!((b.attention[k] - a.attention[src]).abs() <= 1e-12);
        }
    }
    assert!(worst <= 1e-6);
}

#[test]
fn one_small_adam_step_lowers_the_loss() {
    let mut rng = seeded(20);
    for seed in 0..20u64 {
        let (n, d, h) = (range(&mut rng, 1, 12), range(&mut rng, 1, 8), range(&mut rng, 1, 6));
        let bag = random_bag(&mut rng, n, d, 1.5);
        let label = if seed % 2 == 0 { Label::EgfrPos } else { Label::EgfrNeg };
        let mut p = AbmilParams::init(d, h, 100 + seed).unwrap();
        let before = grad(&bag, label, &p).unwrap();
        let mut state = AdamState::new(&p);
        adam_step(&mut p, &before.grads, &mut state, 1e-5, &AdamConfig::default());
        let after = grad(&bag, label, &p).unwrap().loss;
        assert!(after < before.loss, "seed {seed}: {after} >= {}", before.loss);
    }
}

#[test]
fn singleton_bag_reduces_to_logistic_regression() {
    let mut rng = seeded(3);
    let bag = random_bag(&mut rng, 1, 5, 1.0);
    let p = AbmilParams::init(5, 4, 9).unwrap();
    let x: Vec<f64> = bag.row(0).iter().map(|&v| v as f64).collect();
    let logit: f64 = p.c.iter().zip(&x).map(|(c, x)| c * x).sum::<f64>() + p.b;
    let out = forward(&bag, &p).unwrap();
    assert!((out.prob - 1.0 / (1.0 + (-logit).exp())).abs() < 1e-14);
}
