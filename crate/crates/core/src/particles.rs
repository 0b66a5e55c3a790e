use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// All particles drawn so far, with their importance weights and the stage
/// that produced them.
///
/// Stages are appended in order, so `stage_of` is nondecreasing and each
/// stage occupies a contiguous block of rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleStore {
    points: DMatrix<f64>,
    weights: DVector<f64>,
    stage_of: Vec<usize>,
    stage_ends: Vec<usize>,
}

impl ParticleStore {
    pub fn new(dim: usize) -> Self {
        Self {
            points: DMatrix::zeros(0, dim),
            weights: DVector::zeros(0),
            stage_of: Vec::new(),
            stage_ends: Vec::new(),
        }
    }

    /// A single-stage store, mostly useful for post-hoc use and tests.
    pub fn from_parts(points: DMatrix<f64>, weights: DVector<f64>) -> Result<Self> {
        let mut store = Self::new(points.ncols());
        store.push_stage(points, weights)?;
        Ok(store)
    }

    /// Appends one stage; returns its index (starting at 0).
    pub fn push_stage(&mut self, points: DMatrix<f64>, weights: DVector<f64>) -> Result<usize> {
        if points.ncols() != self.dim() {
            return Err(Error::dims(format!(
                "stage has dimension {}, store has {}",
                points.ncols(),
                self.dim()
            )));
        }
        if points.nrows() != weights.len() {
            return Err(Error::dims(format!(
                "{} points but {} weights",
                points.nrows(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::InvalidParameter(format!(
                "importance weight {w} is not finite and nonnegative"
            )));
        }
        let stage = self.stage_ends.len();
        let old = self.len();
        let added = points.nrows();
        let dim = self.dim();

        let mut all = std::mem::replace(&mut self.points, DMatrix::zeros(0, dim)).resize_vertically(old + added, 0.0);
        all.rows_mut(old, added).copy_from(&points);
        self.points = all;
        let mut w = std::mem::replace(&mut self.weights, DVector::zeros(0)).resize_vertically(old + added, 0.0);
        w.rows_mut(old, added).copy_from(&weights);
        self.weights = w;

        self.stage_of.extend(std::iter::repeat_n(stage, added));
        self.stage_ends.push(old + added);
        Ok(stage)
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_stages(&self) -> usize {
        self.stage_ends.len()
    }

    pub fn points(&self) -> &DMatrix<f64> {
        &self.points
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn stage_of(&self) -> &[usize] {
        &self.stage_of
    }

    /// Number of particles contained in the first `stages` stages.
    pub fn count_through(&self, stages: usize) -> usize {
        match stages {
            0 => 0,
            s => self.stage_ends[s.min(self.num_stages()) - 1],
        }
    }

    /// Copy of the store restricted to its first `stages` stages.
    pub fn truncated(&self, stages: usize) -> Self {
        let n = self.count_through(stages);
        Self {
            points: self.points.rows(0, n).into_owned(),
            weights: self.weights.rows(0, n).into_owned(),
            stage_of: self.stage_of[..n].to_vec(),
            stage_ends: self.stage_ends[..stages.min(self.num_stages())].to_vec(),
        }
    }

    /// Returns the same particles with every weight multiplied by `factor`.
    pub fn with_scaled_weights(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.weights *= factor;
        out
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.sum()
    }

    /// `(sum w)^2 / sum w^2`.
    pub fn effective_sample_size(&self) -> f64 {
        let s = self.weights.sum();
        let s2 = self.weights.norm_squared();
        if s2 > 0.0 {
            s * s / s2
        } else {
            0.0
        }
    }
}
