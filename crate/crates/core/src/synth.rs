//! Synthetic ground truth: H&E-like slides with a known tissue mask, and
//! embedding-bag cohorts with planted witness instances.

use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cohort::{Label, SlideManifest, SlideRecord, Variant};
use crate::encoder::{bag_path, save_bag, EmbeddingBag};
use crate::error::{Error, Result};
use crate::preprocess::{RasterImage, Rgb, TissueMask};
use crate::rng::{seeded, unit_f64};

/// Background is a light grey jittered by up to `BACKGROUND_JITTER` per
/// channel; blob colors are drawn from `blob_low..=blob_high` and jittered
/// by up to `BLOB_JITTER`. With the defaults every blob pixel has
/// S > 0.16 and V < 0.9, and every background pixel has S < 0.05.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSlideSpec {
    pub width: u32,
    pub height: u32,
    pub n_blobs: usize,
    pub blob_low: Rgb,
    pub blob_high: Rgb,
    pub background: Rgb,
    pub seed: u64,
}

const BACKGROUND_JITTER: i32 = 4;
const BLOB_JITTER: i32 = 8;
/// Supersampling grid per axis for edge pixels.
const AA: u32 = 4;

impl Default for SynthSlideSpec {
    fn default() -> Self {
        SynthSlideSpec {
            width: 1024,
            height: 768,
            n_blobs: 6,
            blob_low: [150, 50, 140],
            blob_high: [220, 110, 210],
            background: [243, 241, 245],
            seed: 0,
        }
    }
}

struct Ellipse {
    cx: f64,
    cy: f64,
    rx: f64,
    ry: f64,
    cos: f64,
    sin: f64,
    color: Rgb,
}

impl Ellipse {
    /// < 1 inside, > 1 outside.
    fn level(&self, x: f64, y: f64) -> f64 {
        let dx = x - self.cx;
        let dy = y - self.cy;
        let u = dx * self.cos + dy * self.sin;
        let v = -dx * self.sin + dy * self.cos;
        (u / self.rx).powi(2) + (v / self.ry).powi(2)
    }

    fn bounds(&self, w: u32, h: u32) -> (u32, u32, u32, u32) {
        let r = self.rx.max(self.ry) + 1.0;
        let clamp = |v: f64, hi: u32| v.max(0.0).min(hi as f64) as u32;
        (
            clamp(self.cx - r, w),
            clamp(self.cx + r + 1.0, w),
            clamp(self.cy - r, h),
            clamp(self.cy + r + 1.0, h),
        )
    }

    /// Fraction of the pixel's area inside the ellipse.
    fn coverage(&self, px: u32, py: u32) -> f64 {
        let centre = self.level(px as f64 + 0.5, py as f64 + 0.5);
        // far from the rim the pixel is fully in or out
        let rim = 2.0 / self.rx.min(self.ry);
        if centre < 1.0 - 2.0 * rim {
            return 1.0;
        }
        if centre > 1.0 + 2.0 * rim {
            return 0.0;
        }
        let step = 1.0 / AA as f64;
        let mut inside = 0;
        for sy in 0..AA {
            for sx in 0..AA {
                let x = px as f64 + (sx as f64 + 0.5) * step;
                let y = py as f64 + (sy as f64 + 0.5) * step;
                if self.level(x, y) < 1.0 {
                    inside += 1;
                }
            }
        }
        inside as f64 / (AA * AA) as f64
    }
}

fn jitter(rng: &mut impl RngCore, base: Rgb, amount: i32) -> Rgb {
    base.map(|c| (c as i32 + rng.random_range(-amount..=amount)).clamp(0, 255) as u8)
}

fn blend(a: Rgb, b: Rgb, alpha: f64) -> Rgb {
    [0, 1, 2].map(|i| (alpha * a[i] as f64 + (1.0 - alpha) * b[i] as f64).round() as u8)
}

/// Rasterizes elliptical blobs on a light background. The returned mask is
/// the set of pixels whose centre lies inside some blob; edge pixels are
/// anti-aliased into the background.
pub fn generate_slide(spec: &SynthSlideSpec) -> Result<(RasterImage, TissueMask)> {
    if spec.width < 256 || spec.height < 256 {
        return Err(Error::contract(format!(
            "synthetic slides must be at least 256x256, got {}x{}",
            spec.width, spec.height
        )));
    }
    let (w, h) = (spec.width, spec.height);
    let mut rng = seeded(spec.seed);
    let pixels = (0..w as usize * h as usize)
        .map(|_| jitter(&mut rng, spec.background, BACKGROUND_JITTER))
        .collect();
    let mut image = RasterImage::new(w, h, pixels)?;
    let mut mask = TissueMask::filled(w, h, false);

    let short = w.min(h) as f64;
    for _ in 0..spec.n_blobs {
        let color = [0, 1, 2].map(|i| rng.random_range(spec.blob_low[i]..=spec.blob_high[i]));
        let theta = unit_f64(&mut rng) * std::f64::consts::PI;
        let blob = Ellipse {
            cx: unit_f64(&mut rng) * w as f64,
            cy: unit_f64(&mut rng) * h as f64,
            rx: short * (0.08 + 0.14 * unit_f64(&mut rng)),
            ry: short * (0.08 + 0.14 * unit_f64(&mut rng)),
            cos: theta.cos(),
            sin: theta.sin(),
            color,
        };
        let (x0, x1, y0, y1) = blob.bounds(w, h);
        for y in y0..y1 {
            for x in x0..x1 {
                let alpha = blob.coverage(x, y);
                if alpha <= 0.0 {
                    continue;
                }
                let fg = jitter(&mut rng, blob.color, BLOB_JITTER);
                let px = image.pixel_mut(x, y);
                *px = blend(fg, *px, alpha);
                if blob.level(x as f64 + 0.5, y as f64 + 0.5) < 1.0 {
                    mask.set(x, y, true);
                }
            }
        }
    }
    Ok((image, mask))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthBagSpec {
    pub n_bags: usize,
    pub dim: usize,
    pub bag_size: (usize, usize),
    /// Mean of a witness instance along the signal direction.
    pub signal_strength: f64,
    pub noise: f64,
    pub positive_fraction: f64,
    pub seed: u64,
}

impl Default for SynthBagSpec {
    fn default() -> Self {
        SynthBagSpec {
            n_bags: 100,
            dim: 16,
            bag_size: (20, 50),
            signal_strength: 4.0,
            noise: 1.0,
            positive_fraction: 0.5,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthBag {
    pub bag: EmbeddingBag,
    pub label: Label,
    /// Rows holding a planted witness.
    pub signal_rows: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthCohort {
    pub direction: Vec<f64>,
    pub bags: Vec<SynthBag>,
}

impl SynthCohort {
    pub fn labeled(&self) -> Vec<(EmbeddingBag, Label)> {
        self.bags.iter().map(|b| (b.bag.clone(), b.label)).collect()
    }

    /// Manifest with `EGFR` for positive bags and the negative variants in
    /// rotation; `image_uri` points at the bag file.
    pub fn manifest(&self) -> SlideManifest {
        let negatives = [Variant::Alk, Variant::Ros1, Variant::TripleNeg];
        let mut n_neg = 0;
        let records = self
            .bags
            .iter()
            .map(|b| {
                let variant = if b.label.is_positive() {
                    Variant::Egfr
                } else {
                    n_neg += 1;
                    negatives[(n_neg - 1) % negatives.len()]
                };
                let uri = format!("{}.ebag", b.bag.slide_id);
                SlideRecord::new(b.bag.slide_id.clone(), uri, variant, 40.0, 0.23)
            })
            .collect();
        SlideManifest::from_records(records).expect("synthetic ids are unique")
    }

    /// Writes one `.ebag` per bag plus `manifest.csv` into `dir`.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<SlideManifest> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        for b in &self.bags {
            save_bag(&b.bag, bag_path(dir, &b.bag.slide_id))?;
        }
        let manifest = self.manifest();
        manifest.write_csv(std::io::BufWriter::new(std::fs::File::create(dir.join("manifest.csv"))?))?;
        Ok(manifest)
    }
}

/// Bags of isotropic noise; positive bags additionally carry 1–3 witness
/// instances centred at `signal_strength * direction`.
///
/// The direction and the label order come from `seed`; bag `i` is drawn
/// from its own stream seeded with `seed + 1 + i`.
pub fn generate_bags(spec: &SynthBagSpec) -> Result<SynthCohort> {
    let (n_min, n_max) = spec.bag_size;
    if n_min == 0 || n_min > n_max {
        return Err(Error::contract(format!("invalid bag size range [{n_min}, {n_max}]")));
    }
    if !(spec.positive_fraction > 0.0 && spec.positive_fraction < 1.0) {
        return Err(Error::contract("positive_fraction must lie in (0, 1)"));
    }
    if spec.dim < 2 {
        return Err(Error::contract("dim must be >= 2"));
    }
    if !(spec.signal_strength >= 0.0 && spec.noise > 0.0) {
        return Err(Error::contract("signal_strength must be >= 0 and noise > 0"));
    }

    let mut rng = seeded(spec.seed);
    let mut direction: Vec<f64> = (0..spec.dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = direction.iter().map(|x| x * x).sum::<f64>().sqrt();
    direction.iter_mut().for_each(|x| *x /= norm);

    let n_pos = (spec.n_bags as f64 * spec.positive_fraction).round() as usize;
    let mut labels: Vec<Label> = (0..spec.n_bags)
        .map(|i| if i < n_pos { Label::EgfrPos } else { Label::EgfrNeg })
        .collect();
    labels.shuffle(&mut rng);

    let noise = Normal::new(0.0, spec.noise).map_err(|e| Error::contract(e.to_string()))?;
    let bags = labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| {
            let mut rng = seeded(spec.seed.wrapping_add(1 + i as u64));
            let n = rng.random_range(n_min..=n_max);
            let mut signal_rows = Vec::new();
            if label.is_positive() {
                let k = rng.random_range(1..=3usize).min(n);
                let mut rows: Vec<usize> = (0..n).collect();
                rows.shuffle(&mut rng);
                signal_rows = rows[..k].to_vec();
                signal_rows.sort_unstable();
            }
            let mut matrix = Array2::<f32>::zeros((n, spec.dim));
            for (r, mut row) in matrix.rows_mut().into_iter().enumerate() {
                let shift = if signal_rows.contains(&r) { spec.signal_strength } else { 0.0 };
                for (x, d) in row.iter_mut().zip(&direction) {
                    *x = (shift * d + noise.sample(&mut rng)) as f32;
                }
            }
            let coords = (0..n as u32).map(|r| (0, r * 256)).collect();
            let bag = EmbeddingBag::new(format!("synth_{i:03}"), coords, matrix)?.with_label(label);
            Ok(SynthBag {
                bag,
                label,
                signal_rows,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SynthCohort { direction, bags })
}
