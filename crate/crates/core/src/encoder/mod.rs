//! Patch encoder boundary.
//!
//! Real foundation-model features enter as precomputed `.ebag` files. The
//! stub encoder is a deterministic stand-in that lets the rest of the
//! pipeline run without model weights.

mod bag;
mod ebag;

use std::path::{Path, PathBuf};

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use bag::EmbeddingBag;
pub use ebag::{
    decode_bag, encode_bag, encoded_len, load_bag, read_bag, save_bag, write_bag, EBAG_EXTENSION, EBAG_MAGIC,
    EBAG_VERSION,
};

use crate::error::{Error, Result};
use crate::preprocess::Patch;
use crate::rng::{fnv1a64, seeded, signed_unit_f64};

pub const DEFAULT_EMBEDDING_DIM: usize = 1536;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    Stub,
    Precomputed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderSpec {
    pub kind: EncoderKind,
    pub dim: usize,
    pub seed: u64,
}

impl Default for EncoderSpec {
    fn default() -> Self {
        EncoderSpec {
            kind: EncoderKind::Stub,
            dim: DEFAULT_EMBEDDING_DIM,
            seed: 0,
        }
    }
}

impl EncoderSpec {
    pub fn stub(dim: usize, seed: u64) -> Self {
        EncoderSpec {
            kind: EncoderKind::Stub,
            dim,
            seed,
        }
    }

    pub fn precomputed(dim: usize) -> Self {
        EncoderSpec {
            kind: EncoderKind::Precomputed,
            dim,
            seed: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::contract("encoder dim must be >= 1"));
        }
        Ok(())
    }
}

/// Summary statistics added to the first eight stub components:
/// mean R, G, B; population std R, G, B (all scaled to `[0, 1]`);
/// tissue fraction; 0.
pub fn patch_summary(patch: &Patch) -> [f64; 8] {
    let n = patch.pixels.len().max(1) as f64;
    let mut sum = [0.0f64; 3];
    let mut sq = [0.0f64; 3];
    for px in &patch.pixels {
        for c in 0..3 {
            let v = px[c] as f64 / 255.0;
            sum[c] += v;
            sq[c] += v * v;
        }
    }
    let mean = sum.map(|s| s / n);
    let std = [0, 1, 2].map(|c| (sq[c] / n - mean[c] * mean[c]).max(0.0).sqrt());
    [mean[0], mean[1], mean[2], std[0], std[1], std[2], patch.tissue_fraction, 0.0]
}

/// Unit-norm pseudo-random direction keyed by the patch content:
/// splitmix64 seeded with `fnv1a64(pixels) ^ seed`, `dim` draws uniform in
/// `[-1, 1)`, then normalized.
pub fn stub_direction(patch: &Patch, seed: u64, dim: usize) -> Vec<f64> {
    let mut rng = seeded(fnv1a64(&patch.bytes()) ^ seed);
    let mut v: Vec<f64> = (0..dim).map(|_| signed_unit_f64(&mut rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

pub fn stub_encode(patch: &Patch, spec: &EncoderSpec) -> Result<Vec<f32>> {
    if spec.kind != EncoderKind::Stub {
        return Err(Error::contract("stub_encode called with a non-stub encoder spec"));
    }
    spec.validate()?;
    let mut v = stub_direction(patch, spec.seed, spec.dim);
    for (x, off) in v.iter_mut().zip(patch_summary(patch)) {
        *x += off;
    }
    Ok(v.into_iter().map(|x| x as f32).collect())
}

/// Encodes every patch of a slide with the stub encoder. Rows follow patch
/// order no matter how the work is scheduled.
pub fn encode_slide(slide_id: &str, patches: &[Patch], spec: &EncoderSpec) -> Result<EmbeddingBag> {
    if patches.is_empty() {
        return Err(Error::EmptyBag(slide_id.to_string()));
    }
    let rows = patches
        .par_iter()
        .map(|p| stub_encode(p, spec))
        .collect::<Result<Vec<_>>>()?;
    let flat = rows.into_iter().flatten().collect();
    let matrix = Array2::from_shape_vec((patches.len(), spec.dim), flat).expect("every row has spec.dim values");
    let coords = patches.iter().map(|p| p.origin).collect();
    EmbeddingBag::new(slide_id, coords, matrix)
}

/// Path of a slide's bag inside a bag directory.
pub fn bag_path(dir: impl AsRef<Path>, slide_id: &str) -> PathBuf {
    dir.as_ref().join(format!("{slide_id}.{EBAG_EXTENSION}"))
}

/// Loads a precomputed bag keyed by `slide_id` and checks it against `spec`.
pub fn load_precomputed(dir: impl AsRef<Path>, slide_id: &str, spec: &EncoderSpec) -> Result<EmbeddingBag> {
    let bag = load_bag(bag_path(dir, slide_id))?;
    if bag.slide_id != slide_id {
        return Err(Error::Data(format!(
            "bag file for {slide_id} declares slide_id {}",
            bag.slide_id
        )));
    }
    if bag.dim() != spec.dim {
        return Err(Error::Data(format!(
            "bag {slide_id} has dimension {}, encoder expects {}",
            bag.dim(),
            spec.dim
        )));
    }
    Ok(bag)
}
