use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::RngCore;

use crate::error::{Error, Result};
use crate::rng::{seeded, signed_unit_f64};

pub const ABML_MAGIC: &[u8; 4] = b"ABML";
pub const ABML_VERSION: u16 = 1;

/// Weights of the gated-attention MIL head.
///
/// `v` and `u` (both `hidden × dim`) form the tanh branch and the sigmoid
/// gate, `w` maps the gated hidden vector to an attention score, and
/// `c`, `b` are the logistic classifier on the pooled embedding.
#[derive(Clone, Debug, PartialEq)]
pub struct AbmilParams {
    pub v: Array2<f64>,
    pub u: Array2<f64>,
    pub w: Array1<f64>,
    pub c: Array1<f64>,
    pub b: f64,
}

impl AbmilParams {
    pub fn zeros(dim: usize, hidden: usize) -> Self {
        AbmilParams {
            v: Array2::zeros((hidden, dim)),
            u: Array2::zeros((hidden, dim)),
            w: Array1::zeros(hidden),
            c: Array1::zeros(dim),
            b: 0.0,
        }
    }

    /// Seeded uniform init: `v`, `u`, `c` in `±sqrt(1/dim)`, `w` in
    /// `±sqrt(1/hidden)`, `b = 0`.
    pub fn init(dim: usize, hidden: usize, seed: u64) -> Result<Self> {
        Self::init_with(dim, hidden, &mut seeded(seed))
    }

    pub fn init_with(dim: usize, hidden: usize, rng: &mut impl RngCore) -> Result<Self> {
        if dim == 0 || hidden == 0 {
            return Err(Error::contract(format!("dim and hidden must be >= 1, got {dim}, {hidden}")));
        }
        let in_scale = (1.0 / dim as f64).sqrt();
        let hid_scale = (1.0 / hidden as f64).sqrt();
        let mut draw = |scale: f64| scale * signed_unit_f64(rng);
        let v = Array2::from_shape_simple_fn((hidden, dim), || draw(in_scale));
        let u = Array2::from_shape_simple_fn((hidden, dim), || draw(in_scale));
        let w = Array1::from_shape_simple_fn(hidden, || draw(hid_scale));
        let c = Array1::from_shape_simple_fn(dim, || draw(in_scale));
        Ok(AbmilParams { v, u, w, c, b: 0.0 })
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }

    pub fn hidden(&self) -> usize {
        self.w.len()
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.dim(), self.hidden())
    }

    pub fn check_shapes(&self) -> Result<()> {
        let (h, d) = (self.hidden(), self.dim());
        if self.v.dim() != (h, d) || self.u.dim() != (h, d) {
            return Err(Error::contract(format!(
                "inconsistent shapes: v {:?}, u {:?}, w {h}, c {d}",
                self.v.dim(),
                self.u.dim()
            )));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    /// Parameter tensors as flat slices in checkpoint order `v, u, w, c, b`.
    pub fn tensors(&self) -> [&[f64]; 5] {
        [
            self.v.as_slice().expect("standard layout"),
            self.u.as_slice().expect("standard layout"),
            self.w.as_slice().expect("standard layout"),
            self.c.as_slice().expect("standard layout"),
            std::slice::from_ref(&self.b),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 5] {
        [
            self.v.as_slice_mut().expect("standard layout"),
            self.u.as_slice_mut().expect("standard layout"),
            self.w.as_slice_mut().expect("standard layout"),
            self.c.as_slice_mut().expect("standard layout"),
            std::slice::from_mut(&mut self.b),
        ]
    }

    pub fn num_values(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Rounds every value to the nearest `f32`, i.e. what a checkpoint keeps.
    pub fn rounded_to_f32(&self) -> Self {
        let mut out = self.clone();
        for t in out.tensors_mut() {
            t.iter_mut().for_each(|x| *x = *x as f32 as f64);
        }
        out
    }

    pub fn write_abml<W: Write>(&self, mut sink: W) -> Result<usize> {
        self.check_shapes()?;
        let dim = u32::try_from(self.dim()).map_err(|_| Error::Format("dim exceeds u32".into()))?;
        let hidden = u32::try_from(self.hidden()).map_err(|_| Error::Format("hidden exceeds u32".into()))?;
        let mut buf = Vec::with_capacity(14 + 4 * self.num_values());
        buf.extend_from_slice(ABML_MAGIC);
        buf.extend_from_slice(&ABML_VERSION.to_le_bytes());
        buf.extend_from_slice(&dim.to_le_bytes());
        buf.extend_from_slice(&hidden.to_le_bytes());
        for t in self.tensors() {
            for &x in t {
                buf.extend_from_slice(&(x as f32).to_le_bytes());
            }
        }
        sink.write_all(&buf)?;
        sink.flush()?;
        Ok(buf.len())
    }

    pub fn read_abml<R: Read>(mut source: R) -> Result<Self> {
        let mut buf = Vec::new();
        source.read_to_end(&mut buf)?;
        if buf.len() < 14 {
            return Err(Error::Truncated {
                expected: 14,
                actual: buf.len(),
            });
        }
        if &buf[..4] != ABML_MAGIC {
            return Err(Error::Format(format!(
                "bad magic {:?}, expected \"ABML\"",
                String::from_utf8_lossy(&buf[..4])
            )));
        }
        let version = u16::from_le_bytes([buf[4], buf[5]]);
        if version != ABML_VERSION {
            return Err(Error::Format(format!("unsupported ABML version {version}")));
        }
        let dim = u32::from_le_bytes(buf[6..10].try_into().unwrap()) as usize;
        let hidden = u32::from_le_bytes(buf[10..14].try_into().unwrap()) as usize;
        if dim == 0 || hidden == 0 {
            return Err(Error::Format(format!("invalid shape dim={dim} hidden={hidden}")));
        }
        let mut params = Self::zeros(dim, hidden);
        let expected = 14 + 4 * params.num_values();
        if buf.len() != expected {
            return Err(Error::Truncated {
                expected,
                actual: buf.len(),
            });
        }
        let mut values = buf[14..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64);
        for t in params.tensors_mut() {
            for (slot, x) in t.iter_mut().zip(&mut values) {
                *slot = x;
            }
        }
        if !params.is_finite() {
            return Err(Error::Data("checkpoint holds non-finite weights".into()));
        }
        Ok(params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<usize> {
        self.write_abml(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_abml(BufReader::new(File::open(path)?))
    }
}
