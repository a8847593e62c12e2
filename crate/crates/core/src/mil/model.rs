use ndarray::{Array1, Array2, Axis};

use super::params::AbmilParams;
use crate::cohort::Label;
use crate::encoder::EmbeddingBag;
use crate::error::{Error, Result};

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` inside the
/// log of the loss.
pub const PROB_CLAMP: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub prob: f64,
    pub logit: f64,
    pub attention: Array1<f64>,
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Max-shifted softmax.
pub(crate) fn softmax(scores: &Array1<f64>) -> Array1<f64> {
    let max = scores.fold(f64::NEG_INFINITY, |m, &s| m.max(s));
    let e = scores.mapv(|s| (s - max).exp());
    let sum = e.sum();
    e / sum
}

/// Intermediate values kept for the backward pass.
struct Trace {
    x: Array2<f64>,
    tanh: Array2<f64>,
    gate: Array2<f64>,
    gated: Array2<f64>,
    pooled: Array1<f64>,
    prediction: Prediction,
}

fn check_inputs(bag: &EmbeddingBag, params: &AbmilParams) -> Result<()> {
    params.check_shapes()?;
    if bag.dim() != params.dim() {
        return Err(Error::contract(format!(
            "bag {} has dimension {}, model expects {}",
            bag.slide_id,
            bag.dim(),
            params.dim()
        )));
    }
    if bag.n() == 0 {
        return Err(Error::EmptyBag(bag.slide_id.clone()));
    }
    Ok(())
}

fn trace(bag: &EmbeddingBag, params: &AbmilParams) -> Result<Trace> {
    check_inputs(bag, params)?;
    let x = bag.matrix.mapv(f64::from);
    let tanh = x.dot(&params.v.t()).mapv(f64::tanh);
    let gate = x.dot(&params.u.t()).mapv(sigmoid);
    let gated = &tanh * &gate;
    let scores = gated.dot(&params.w);
    let attention = softmax(&scores);
    let pooled = attention.dot(&x);
    let logit = params.c.dot(&pooled) + params.b;
    let prob = sigmoid(logit);
    if !(logit.is_finite() && attention.iter().all(|a| a.is_finite())) {
        return Err(Error::Numeric(format!("non-finite forward pass on bag {}", bag.slide_id)));
    }
    Ok(Trace {
        x,
        tanh,
        gate,
        gated,
        pooled,
        prediction: Prediction {
            prob,
            logit,
            attention,
        },
    })
}

/// Gated attention pooling followed by a logistic head:
///
/// ```text
/// score_k = w · (tanh(V h_k) ⊙ sigmoid(U h_k))
/// a       = softmax(score)
/// z       = Σ_k a_k h_k
/// prob    = sigmoid(c · z + b)
/// ```
pub fn forward(bag: &EmbeddingBag, params: &AbmilParams) -> Result<Prediction> {
    trace(bag, params).map(|t| t.prediction)
}

/// Binary cross-entropy with the probability clamped away from 0 and 1.
pub fn bce_loss(prob: f64, label: Label) -> f64 {
    let p = prob.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    if label.is_positive() {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossAndGrad {
    pub loss: f64,
    pub prob: f64,
    pub grads: AbmilParams,
}

/// Loss of one bag and its exact gradient with respect to every parameter.
pub fn grad(bag: &EmbeddingBag, label: Label, params: &AbmilParams) -> Result<LossAndGrad> {
    let Trace {
        x,
        tanh,
        gate,
        gated,
        pooled,
        prediction,
    } = trace(bag, params)?;
    let prob = prediction.prob;
    let a = &prediction.attention;
    let loss = bce_loss(prob, label);

    // d loss / d logit; zero where the clamp is active
    let d_logit = if (PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&prob) {
        prob - label.target()
    } else {
        0.0
    };

    let d_c = &pooled * d_logit;
    let d_pooled = &params.c * d_logit;

    // softmax backward
    let d_attn = x.dot(&d_pooled);
    let mean = a.dot(&d_attn);
    let d_score = a * &(d_attn - mean);

    let d_w = gated.t().dot(&d_score);
    let d_gated = d_score.view().insert_axis(Axis(1)).dot(&params.w.view().insert_axis(Axis(0)));
    let d_pre_v = &d_gated * &gate * &tanh.mapv(|t| 1.0 - t * t);
    let d_pre_u = &d_gated * &tanh * &gate.mapv(|s| s * (1.0 - s));
    let d_v = d_pre_v.t().dot(&x);
    let d_u = d_pre_u.t().dot(&x);

    Ok(LossAndGrad {
        loss,
        prob,
        grads: AbmilParams {
            v: d_v,
            u: d_u,
            w: d_w,
            c: d_c,
            b: d_logit,
        },
    })
}
