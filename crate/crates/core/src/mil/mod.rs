//! Gated attention MIL classifier: model, gradients, optimizer and the
//! early-stopping training loop.

mod adam;
mod model;
mod params;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use model::{bce_loss, forward, grad, LossAndGrad, Prediction, PROB_CLAMP};
pub use params::{AbmilParams, ABML_MAGIC, ABML_VERSION};
pub use train::{
    mean_loss, run_epochs, train, EarlyStopping, EpochRecord, Observation, TrainConfig, TrainHistory, TrainOutcome,
};
