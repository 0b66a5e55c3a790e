//! Sampling policies: multivariate Student-t proposals, the defensive
//! mixture wrapper, and the weighted-moment mean update used between stages.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// A proposal density that can be sampled and evaluated exactly.
pub trait Policy: Send + Sync {
    fn dim(&self) -> usize;

    /// `count` i.i.d. draws, one per row.
    fn sample(&self, count: usize, rng: &mut RngStream) -> DMatrix<f64>;

    fn log_density(&self, x: &[f64]) -> f64;

    fn density(&self, x: &[f64]) -> f64 {
        self.log_density(x).exp()
    }
}

/// Multivariate Student-t with location `mean`, scale matrix `scale` and
/// `dof` degrees of freedom.
#[derive(Debug, Clone)]
pub struct StudentTPolicy {
    mean: DVector<f64>,
    scale: DMatrix<f64>,
    dof: f64,
    chol: Cholesky<f64, Dyn>,
    log_norm: f64,
    chi2: ChiSquared<f64>,
}

impl StudentTPolicy {
    /// Builds the policy whose sampling covariance is `covariance`; the scale
    /// matrix is `covariance * (dof - 2) / dof`, so `dof` must exceed 2.
    pub fn with_covariance(mean: DVector<f64>, covariance: DMatrix<f64>, dof: f64) -> Result<Self> {
        if !(dof > 2.0) {
            return Err(Error::InvalidParameter(format!(
                "a finite covariance needs more than 2 degrees of freedom, got {dof}"
            )));
        }
        let scale = covariance * ((dof - 2.0) / dof);
        Self::with_scale(mean, scale, dof)
    }

    pub fn with_scale(mean: DVector<f64>, scale: DMatrix<f64>, dof: f64) -> Result<Self> {
        let d = mean.len();
        if scale.shape() != (d, d) {
            return Err(Error::dims(format!(
                "mean has length {d} but scale matrix is {}x{}",
                scale.nrows(),
                scale.ncols()
            )));
        }
        if !(dof > 0.0) || !dof.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "degrees of freedom must be positive, got {dof}"
            )));
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("mean must be finite".into()));
        }
        let asym = (&scale - scale.transpose()).amax();
        if asym > 1e-12 * (1.0 + scale.amax()) {
            return Err(Error::NotPositiveDefinite);
        }
        let chol = Cholesky::new(scale.clone()).ok_or(Error::NotPositiveDefinite)?;
        let half_log_det: f64 = chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum();
        let df = d as f64;
        let log_norm =
            libm::lgamma((dof + df) / 2.0) - libm::lgamma(dof / 2.0) - 0.5 * df * (dof * PI).ln() - half_log_det;
        let chi2 = ChiSquared::new(dof).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        Ok(Self {
            mean,
            scale,
            dof,
            chol,
            log_norm,
            chi2,
        })
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn scale_matrix(&self) -> &DMatrix<f64> {
        &self.scale
    }

    pub fn dof(&self) -> f64 {
        self.dof
    }

    /// Same scale and degrees of freedom, new location.
    pub fn with_mean(&self, mean: DVector<f64>) -> Result<Self> {
        if mean.len() != self.mean.len() {
            return Err(Error::dims("new mean has the wrong dimension"));
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("mean must be finite".into()));
        }
        let mut next = self.clone();
        next.mean = mean;
        Ok(next)
    }

    /// One draw `mean + L z sqrt(dof / s)`.
    fn draw_into(&self, rng: &mut RngStream, z: &mut DVector<f64>, out: &mut [f64]) {
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        let s: f64 = self.chi2.sample(rng);
        let radius = (self.dof / s).sqrt();
        let l = self.chol.l_dirty();
        let d = self.mean.len();
        for i in 0..d {
            let mut acc = 0.0;
            for j in 0..=i {
                acc += l[(i, j)] * z[j];
            }
            out[i] = self.mean[i] + radius * acc;
        }
    }

    fn squared_mahalanobis(&self, x: &[f64]) -> f64 {
        let diff = DVector::from_iterator(x.len(), x.iter().zip(self.mean.iter()).map(|(a, b)| a - b));
        let y = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&diff)
            .expect("Cholesky factor has a positive diagonal");
        y.norm_squared()
    }
}

impl Policy for StudentTPolicy {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn sample(&self, count: usize, rng: &mut RngStream) -> DMatrix<f64> {
        let d = self.dim();
        let mut out = DMatrix::zeros(count, d);
        let mut z = DVector::zeros(d);
        let mut row = vec![0.0; d];
        for i in 0..count {
            self.draw_into(rng, &mut z, &mut row);
            for (j, v) in row.iter().enumerate() {
                out[(i, j)] = *v;
            }
        }
        out
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        let delta = self.squared_mahalanobis(x);
        let d = self.dim() as f64;
        self.log_norm - 0.5 * (self.dof + d) * (delta / self.dof).ln_1p()
    }
}

/// Defensive mixture `(1 - eta) * adaptive + eta * anchor`.
#[derive(Debug, Clone)]
pub struct MixturePolicy {
    adaptive: StudentTPolicy,
    anchor: StudentTPolicy,
    eta: f64,
}

/// Mixing weight used when the defensive mixture is switched on without an
/// explicit value.
pub const DEFAULT_ETA: f64 = 0.05;

impl MixturePolicy {
    pub fn new(adaptive: StudentTPolicy, anchor: StudentTPolicy, eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta < 1.0) {
            return Err(Error::InvalidParameter(format!("eta must lie in (0, 1), got {eta}")));
        }
        if adaptive.dim() != anchor.dim() {
            return Err(Error::dims("mixture components differ in dimension"));
        }
        Ok(Self { adaptive, anchor, eta })
    }

    pub fn adaptive(&self) -> &StudentTPolicy {
        &self.adaptive
    }

    pub fn anchor(&self) -> &StudentTPolicy {
        &self.anchor
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Moves the adaptive component; the anchor stays put.
    pub fn with_mean(&self, mean: DVector<f64>) -> Result<Self> {
        Ok(Self {
            adaptive: self.adaptive.with_mean(mean)?,
            anchor: self.anchor.clone(),
            eta: self.eta,
        })
    }
}

impl Policy for MixturePolicy {
    fn dim(&self) -> usize {
        self.adaptive.dim()
    }

    fn sample(&self, count: usize, rng: &mut RngStream) -> DMatrix<f64> {
        let d = self.dim();
        let mut out = DMatrix::zeros(count, d);
        let mut z = DVector::zeros(d);
        let mut row = vec![0.0; d];
        for i in 0..count {
            let from_anchor = rng.random::<f64>() < self.eta;
            let component = if from_anchor { &self.anchor } else { &self.adaptive };
            component.draw_into(rng, &mut z, &mut row);
            for (j, v) in row.iter().enumerate() {
                out[(i, j)] = *v;
            }
        }
        out
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        let a = (1.0 - self.eta).ln() + self.adaptive.log_density(x);
        let b = self.eta.ln() + self.anchor.log_density(x);
        let hi = a.max(b);
        hi + ((a - hi).exp() + (b - hi).exp()).ln()
    }
}

/// The policy families the harness can adapt.
#[derive(Debug, Clone)]
pub enum SamplingPolicy {
    StudentT(StudentTPolicy),
    Defensive(MixturePolicy),
}

impl SamplingPolicy {
    pub fn mean(&self) -> &DVector<f64> {
        match self {
            SamplingPolicy::StudentT(p) => p.mean(),
            SamplingPolicy::Defensive(p) => p.adaptive().mean(),
        }
    }

    pub fn with_mean(&self, mean: DVector<f64>) -> Result<Self> {
        Ok(match self {
            SamplingPolicy::StudentT(p) => SamplingPolicy::StudentT(p.with_mean(mean)?),
            SamplingPolicy::Defensive(p) => SamplingPolicy::Defensive(p.with_mean(mean)?),
        })
    }
}

impl Policy for SamplingPolicy {
    fn dim(&self) -> usize {
        match self {
            SamplingPolicy::StudentT(p) => p.dim(),
            SamplingPolicy::Defensive(p) => p.dim(),
        }
    }

    fn sample(&self, count: usize, rng: &mut RngStream) -> DMatrix<f64> {
        match self {
            SamplingPolicy::StudentT(p) => p.sample(count, rng),
            SamplingPolicy::Defensive(p) => p.sample(count, rng),
        }
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        match self {
            SamplingPolicy::StudentT(p) => p.log_density(x),
            SamplingPolicy::Defensive(p) => p.log_density(x),
        }
    }
}

/// Running sums for the importance-weighted mean of all particles so far.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmAccumulator {
    pub weighted_sum: DVector<f64>,
    pub weight_sum: f64,
}

impl GmmAccumulator {
    pub fn new(dim: usize) -> Self {
        Self {
            weighted_sum: DVector::zeros(dim),
            weight_sum: 0.0,
        }
    }

    pub fn fold(&mut self, points: &DMatrix<f64>, weights: &DVector<f64>) -> Result<()> {
        if points.ncols() != self.weighted_sum.len() || points.nrows() != weights.len() {
            return Err(Error::dims("batch does not match accumulator"));
        }
        self.weighted_sum += points.transpose() * weights;
        self.weight_sum += weights.sum();
        Ok(())
    }

    pub fn mean(&self) -> Result<DVector<f64>> {
        if self.weight_sum > 0.0 {
            Ok(&self.weighted_sum / self.weight_sum)
        } else {
            Err(Error::ZeroWeightSum)
        }
    }
}

/// Folds a batch into the accumulator and returns the updated mean.
pub fn gmm_update(acc: &mut GmmAccumulator, points: &DMatrix<f64>, weights: &DVector<f64>) -> Result<DVector<f64>> {
    acc.fold(points, weights)?;
    acc.mean()
}
