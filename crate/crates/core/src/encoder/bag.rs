use ndarray::{Array2, ArrayView1};

use crate::cohort::Label;
use crate::error::{Error, Result};

/// One slide's patch embeddings: an `n × dim` matrix plus the tile origin of
/// every row.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingBag {
    pub slide_id: String,
    pub coords: Vec<(u32, u32)>,
    pub matrix: Array2<f32>,
    pub label: Option<Label>,
}

impl EmbeddingBag {
    pub fn new(slide_id: impl Into<String>, coords: Vec<(u32, u32)>, matrix: Array2<f32>) -> Result<Self> {
        let bag = EmbeddingBag {
            slide_id: slide_id.into(),
            coords,
            matrix,
            label: None,
        };
        bag.validate()?;
        Ok(bag)
    }

    /// Builds a bag from row vectors, with coordinates `(0, k)` placeholders
    /// when none are known.
    pub fn from_rows(slide_id: impl Into<String>, rows: &[Vec<f32>]) -> Result<Self> {
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::contract("rows of unequal length"));
        }
        let flat = rows.iter().flatten().copied().collect();
        let matrix = Array2::from_shape_vec((rows.len(), dim), flat).expect("shape checked");
        let coords = (0..rows.len() as u32).map(|k| (0, k)).collect();
        Self::new(slide_id, coords, matrix)
    }

    pub fn with_label(mut self, label: Label) -> Self {
        self.label = Some(label);
        self
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn row(&self, k: usize) -> ArrayView1<'_, f32> {
        self.matrix.row(k)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n() == 0 {
            return Err(Error::EmptyBag(self.slide_id.clone()));
        }
        if self.dim() == 0 {
            return Err(Error::Data(format!("bag {} has dimension 0", self.slide_id)));
        }
        if self.coords.len() != self.n() {
            return Err(Error::Data(format!(
                "bag {} has {} coords for {} rows",
                self.slide_id,
                self.coords.len(),
                self.n()
            )));
        }
        if let Some(pos) = self.matrix.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "bag {} has a non-finite value at row {}",
                self.slide_id,
                pos / self.dim()
            )));
        }
        Ok(())
    }

    /// Same bag with rows reordered so that new row `k` is old row `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let matrix = self.matrix.select(ndarray::Axis(0), perm);
        let coords = perm.iter().map(|&k| self.coords[k]).collect();
        EmbeddingBag {
            slide_id: self.slide_id.clone(),
            coords,
            matrix,
            label: self.label,
        }
    }
}
