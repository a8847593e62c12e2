use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::model::{bce_loss, forward, grad};
use super::params::AbmilParams;
use crate::cohort::Label;
use crate::encoder::EmbeddingBag;
use crate::error::{Error, Result};
use crate::rng::seeded;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Consecutive non-improving epochs tolerated before stopping.
    pub patience: usize,
    pub seed: u64,
    pub hidden_dim: usize,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            max_epochs: 50,
            patience: 8,
            seed: 0,
            hidden_dim: 128,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patience < 1 || self.max_epochs < 1 || self.hidden_dim < 1 {
            return Err(Error::validation(
                None,
                "patience, max_epochs and hidden_dim must all be >= 1",
            ));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::validation(None, format!("learning_rate must be > 0, got {}", self.learning_rate)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

/// Per-epoch losses. Epochs are numbered from 1.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub stopped_epoch: usize,
    pub best_epoch: usize,
}

impl TrainHistory {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "epoch,train_loss,val_loss")?;
        for r in &self.epochs {
            writeln!(out, "{},{},{}", r.epoch, r.train_loss, r.val_loss)?;
        }
        Ok(())
    }

    pub fn best(&self) -> Option<&EpochRecord> {
        self.epochs.iter().find(|r| r.epoch == self.best_epoch)
    }
}

/// Patience-based stopping rule: an epoch improves iff its validation loss
/// is strictly below the best seen so far.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    stale: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Observation {
    pub improved: bool,
    pub stop: bool,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            stale: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, val_loss: f64) -> Observation {
        let improved = val_loss < self.best;
        if improved {
            self.best = val_loss;
            self.best_epoch = epoch;
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        Observation {
            improved,
            stop: self.stale >= self.patience,
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

/// Epoch driver shared by [`train`] and anything that wants the same
/// stopping behaviour with its own epoch body.
///
/// `run_epoch(epoch)` returns `(train_loss, val_loss, state)`; the state of
/// the best validation epoch is returned alongside the history. A
/// non-finite loss aborts with [`Error::Diverged`] carrying the history so
/// far.
pub fn run_epochs<S>(
    max_epochs: usize,
    patience: usize,
    mut run_epoch: impl FnMut(usize) -> Result<(f64, f64, S)>,
) -> Result<(TrainHistory, Option<S>)> {
    let mut stopper = EarlyStopping::new(patience);
    let mut history = TrainHistory::default();
    let mut best = None;
    for epoch in 1..=max_epochs {
        let (train_loss, val_loss, state) = match run_epoch(epoch) {
            Ok(out) => out,
            Err(Error::Numeric(_)) => {
                history.best_epoch = stopper.best_epoch();
                return Err(Error::Diverged {
                    epoch,
                    history: Box::new(history),
                });
            }
            Err(e) => return Err(e),
        };
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        history.stopped_epoch = epoch;
        if !(train_loss.is_finite() && val_loss.is_finite()) {
            history.best_epoch = stopper.best_epoch();
            return Err(Error::Diverged {
                epoch,
                history: Box::new(history),
            });
        }
        let obs = stopper.observe(epoch, val_loss);
        history.best_epoch = stopper.best_epoch();
        if obs.improved {
            best = Some(state);
        }
        if obs.stop {
            break;
        }
    }
    Ok((history, best))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    /// Snapshot from the best validation epoch.
    pub params: AbmilParams,
    pub history: TrainHistory,
}

pub fn mean_loss(params: &AbmilParams, bags: &[(EmbeddingBag, Label)]) -> Result<f64> {
    let mut total = 0.0;
    for (bag, label) in bags {
        total += bce_loss(forward(bag, params)?.prob, *label);
    }
    Ok(total / bags.len() as f64)
}

/// Bag-level Adam training with early stopping on validation loss.
///
/// Each epoch visits every training bag once, in an order reshuffled from
/// the seeded generator, taking one optimizer step per bag.
pub fn train(
    train_bags: &[(EmbeddingBag, Label)],
    val_bags: &[(EmbeddingBag, Label)],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_bags.is_empty() || val_bags.is_empty() {
        return Err(Error::contract("training and validation sets must be non-empty"));
    }
    let dim = train_bags[0].0.dim();
    if let Some((bag, _)) = train_bags.iter().chain(val_bags).find(|(b, _)| b.dim() != dim) {
        return Err(Error::contract(format!(
            "bag {} has dimension {}, expected {dim}",
            bag.slide_id,
            bag.dim()
        )));
    }

    let mut rng = seeded(config.seed);
    let mut params = AbmilParams::init_with(dim, config.hidden_dim, &mut rng)?;
    let mut state = AdamState::new(&params);
    let mut order: Vec<usize> = (0..train_bags.len()).collect();

    let (history, best) = run_epochs(config.max_epochs, config.patience, |_| {
        order.shuffle(&mut rng);
        let mut train_total = 0.0;
        for &i in &order {
            let (bag, label) = &train_bags[i];
            let step = grad(bag, *label, &params)?;
            train_total += step.loss;
            adam_step(&mut params, &step.grads, &mut state, config.learning_rate, &config.adam);
        }
        let val = mean_loss(&params, val_bags)?;
        Ok((train_total / train_bags.len() as f64, val, params.clone()))
    })?;
    let best = best.expect("the first finite epoch always improves on +inf");
    Ok(TrainOutcome { params: best, history })
}
