//! Slide-level mutation prediction from whole-slide images.
//!
//! The pipeline runs raster slide → tissue mask → 256×256 tile grid →
//! patch embeddings → gated attention MIL classifier → cross-validated
//! experiment → metric reports. Each stage lives in its own module:
//!
//! - [`cohort`]: manifest CSV, labels and cohort exclusions
//! - [`preprocess`]: HSV tissue segmentation and tiling
//! - [`encoder`]: stub/precomputed patch encoders and the `.ebag` container
//! - [`mil`]: the attention MIL model, its gradients and training loop
//! - [`metrics`]: confusion-matrix metrics, MCC, ROC/AUC, fold aggregation
//! - [`experiment`]: stratified split, k-fold CV, model selection
//! - [`synth`]: synthetic slides and bag cohorts with known ground truth

pub mod cohort;
pub mod encoder;
pub mod experiment;
pub mod error;
pub mod metrics;
pub mod mil;
pub mod preprocess;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
