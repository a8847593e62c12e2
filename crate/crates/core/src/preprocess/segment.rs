use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::image::{RasterImage, Rgb, TissueMask};
use crate::error::{Error, Result};

/// HSV thresholds for the tissue rule `S > sat_min && V < val_max`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentParams {
    pub sat_min: f64,
    pub val_max: f64,
}

impl Default for SegmentParams {
    fn default() -> Self {
        SegmentParams {
            sat_min: 0.08,
            val_max: 0.95,
        }
    }
}

impl SegmentParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("sat_min", self.sat_min), ("val_max", self.val_max)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::contract(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }

    pub fn is_tissue(&self, rgb: Rgb) -> bool {
        let (s, v) = saturation_value(rgb);
        s > self.sat_min && v < self.val_max
    }
}

/// HSV saturation and value of an 8-bit RGB triple, both in `[0, 1]`.
/// Hue is not needed by the tissue rule.
pub fn saturation_value([r, g, b]: Rgb) -> (f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let v = max as f64 / 255.0;
    let s = if max == 0 { 0.0 } else { (max - min) as f64 / max as f64 };
    (s, v)
}

/// Tissue mask by HSV thresholding. Pixels are classified independently, so
/// the parallel map gives the same mask as a sequential scan.
pub fn segment_tissue(image: &RasterImage, params: &SegmentParams) -> Result<TissueMask> {
    params.validate()?;
    let bits = image
        .pixels()
        .par_iter()
        .map(|&p| params.is_tissue(p))
        .collect();
    TissueMask::new(image.width(), image.height(), bits)
}
