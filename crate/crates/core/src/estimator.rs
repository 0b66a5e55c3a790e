//! AIS and AISCV estimates.
//!
//! The AISCV estimate of `E_f[g]` is the intercept of the importance-weighted
//! least-squares regression of `g` on the control variates `h`. Equivalently
//! it is a quadrature rule `sum_i v_i g(X_i)` whose signed weights
//!
//! ```text
//! e_i = 1 - h(X_i)' b1,   b1 = argmin_b sum_i w_i (1 - b' h(X_i))^2
//! v_i = w_i e_i / sum_k w_k e_k
//! ```
//!
//! do not depend on `g`. [`aiscv_fit`] follows the regression route and
//! [`build_quadrature`] the quadrature route; [`matrix_form_oracle`]
//! evaluates the closed form through an explicit `n x n` projector and is
//! meant for cross-checking on small problems.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, wls_fit};
use crate::particles::ParticleStore;

/// `|s| <= DEGENERACY_RTOL * sum(w)` declares the quadrature degenerate.
pub const DEGENERACY_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    Ais,
    Aiscv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub effective_sample_size: f64,
    /// `s = sum_i w_i e_i` for the quadrature route.
    pub weight_sum_used: Option<f64>,
    /// Numerical rank of the weighted control-variate design.
    pub rank: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub value: f64,
    pub method: Method,
    pub n: usize,
    pub m: usize,
    pub diagnostics: Diagnostics,
}

fn check_rows(store: &ParticleStore, rows: usize, what: &str) -> Result<()> {
    if rows != store.len() {
        return Err(Error::dims(format!(
            "{what} has {rows} rows, store holds {} particles",
            store.len()
        )));
    }
    Ok(())
}

/// Self-normalized importance-sampling mean `sum w g / sum w`.
pub fn ais_estimate(store: &ParticleStore, values: &DVector<f64>) -> Result<EstimateReport> {
    check_rows(store, values.len(), "integrand")?;
    let value = linalg::weighted_mean(values.as_slice(), store.weights().as_slice())?;
    Ok(EstimateReport {
        value,
        method: Method::Ais,
        n: store.len(),
        m: 0,
        diagnostics: Diagnostics {
            effective_sample_size: store.effective_sample_size(),
            weight_sum_used: None,
            rank: None,
        },
    })
}

/// Intercept of the weighted least-squares fit of `values` on `h`.
pub fn aiscv_fit(store: &ParticleStore, h: &DMatrix<f64>, values: &DVector<f64>) -> Result<EstimateReport> {
    check_rows(store, values.len(), "integrand")?;
    check_rows(store, h.nrows(), "control matrix")?;
    let weights = store.weights();
    let fit = wls_fit(values, h, weights, true)?;

    // The intercept is identifiable iff the constant is not in the weighted
    // column space of h, i.e. iff centring does not lower the rank.
    if h.ncols() > 0 {
        let full_rank = linalg::weighted_rank(h, weights);
        if fit.rank < full_rank {
            return Err(Error::DegenerateQuadrature { residual_mass: 0.0 });
        }
    }

    Ok(EstimateReport {
        value: fit.intercept,
        method: Method::Aiscv,
        n: store.len(),
        m: h.ncols(),
        diagnostics: Diagnostics {
            effective_sample_size: store.effective_sample_size(),
            weight_sum_used: None,
            rank: Some(fit.rank),
        },
    })
}

/// Integrand-independent quadrature weights for the AISCV estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    points: DMatrix<f64>,
    stage_of: Vec<usize>,
    importance_weights: DVector<f64>,
    raw_residuals: DVector<f64>,
    quad_weights: DVector<f64>,
    weight_sum_used: f64,
    rank: usize,
}

/// Fits the constant vector on `h` without intercept and normalizes
/// `w_i e_i` into quadrature weights.
pub fn build_quadrature(store: &ParticleStore, h: &DMatrix<f64>) -> Result<QuadratureRule> {
    check_rows(store, h.nrows(), "control matrix")?;
    let n = store.len();
    let weights = store.weights();
    let ones = DVector::from_element(n, 1.0);
    let fit = wls_fit(&ones, h, weights, false)?;
    // One refinement step restores orthogonality to the controls when H is
    // badly scaled.
    let correction = wls_fit(&fit.residuals, h, weights, false)?;
    let residuals = correction.residuals;
    let u = weights.component_mul(&residuals);
    let s = u.sum();
    let total = weights.sum();
    if !(s.abs() > DEGENERACY_RTOL * total) {
        return Err(Error::DegenerateQuadrature {
            residual_mass: s / total,
        });
    }
    Ok(QuadratureRule {
        points: store.points().clone(),
        stage_of: store.stage_of().to_vec(),
        importance_weights: weights.clone(),
        raw_residuals: residuals,
        quad_weights: u / s,
        weight_sum_used: s,
        rank: fit.rank,
    })
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.quad_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.quad_weights.is_empty()
    }

    pub fn points(&self) -> &DMatrix<f64> {
        &self.points
    }

    pub fn quad_weights(&self) -> &DVector<f64> {
        &self.quad_weights
    }

    pub fn raw_residuals(&self) -> &DVector<f64> {
        &self.raw_residuals
    }

    pub fn importance_weights(&self) -> &DVector<f64> {
        &self.importance_weights
    }

    pub fn weight_sum_used(&self) -> f64 {
        self.weight_sum_used
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Applies the rule to each column of an `n x p` matrix of integrand
    /// values.
    pub fn apply(&self, values: &DMatrix<f64>) -> Result<DVector<f64>> {
        if values.nrows() != self.len() {
            return Err(Error::dims(format!(
                "integrand values have {} rows, rule has {} points",
                values.nrows(),
                self.len()
            )));
        }
        Ok(values.tr_mul(&self.quad_weights))
    }

    pub fn apply_vector(&self, values: &DVector<f64>) -> Result<f64> {
        if values.len() != self.len() {
            return Err(Error::dims("integrand length does not match rule"));
        }
        Ok(values.dot(&self.quad_weights))
    }

    /// Writes one row per particle: `stage, x1..xd, weight, residual, quad_weight`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut csv = csv::Writer::from_writer(writer);
        let d = self.points.ncols();
        let mut header = vec!["stage".to_string()];
        header.extend((1..=d).map(|j| format!("x{j}")));
        header.extend(["weight", "residual", "quad_weight"].map(String::from));
        csv.write_record(&header)?;
        for i in 0..self.len() {
            let mut row = Vec::with_capacity(d + 4);
            row.push(self.stage_of[i].to_string());
            row.extend((0..d).map(|j| self.points[(i, j)].to_string()));
            row.push(self.importance_weights[i].to_string());
            row.push(self.raw_residuals[i].to_string());
            row.push(self.quad_weights[i].to_string());
            csv.write_record(&row)?;
        }
        csv.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    /// Reads back a rule written by [`QuadratureRule::write_csv`].
    pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut csv = csv::Reader::from_reader(reader);
        let d = csv.headers()?.len().checked_sub(4).ok_or_else(|| Error::Parse {
            line: 1,
            column: 1,
            message: "quadrature header is too short".into(),
        })?;
        let mut stage_of = Vec::new();
        let mut coords = Vec::new();
        let mut cols: [Vec<f64>; 3] = Default::default();
        for (r, rec) in csv.records().enumerate() {
            let rec = rec?;
            let field = |c: usize| -> Result<f64> {
                rec.get(c).and_then(|s| s.parse().ok()).ok_or_else(|| Error::Parse {
                    line: r + 2,
                    column: c + 1,
                    message: "expected a number".into(),
                })
            };
            stage_of.push(field(0)? as usize);
            for j in 0..d {
                coords.push(field(1 + j)?);
            }
            for (k, col) in cols.iter_mut().enumerate() {
                col.push(field(1 + d + k)?);
            }
        }
        let n = stage_of.len();
        let [w, e, v] = cols;
        let importance_weights = DVector::from_vec(w);
        let raw_residuals = DVector::from_vec(e);
        let weight_sum_used = importance_weights.component_mul(&raw_residuals).sum();
        Ok(Self {
            points: DMatrix::from_row_slice(n, d, &coords),
            stage_of,
            importance_weights,
            raw_residuals,
            quad_weights: DVector::from_vec(v),
            weight_sum_used,
            rank: 0,
        })
    }
}

/// `quadrature_apply(rule, values)`.
pub fn quadrature_apply(rule: &QuadratureRule, values: &DMatrix<f64>) -> Result<DVector<f64>> {
    rule.apply(values)
}

/// Closed-form AISCV estimate through the explicit `W`-orthogonal projector
/// `Pi` onto the column space of `h`:
///
/// ```text
/// alpha = 1'(I - Pi)' W (I - Pi) g / 1'(I - Pi)' W (I - Pi) 1
/// ```
///
/// Builds `n x n` matrices, so it is only meant for small `n`.
pub fn matrix_form_oracle(store: &ParticleStore, h: &DMatrix<f64>, values: &DVector<f64>) -> Result<f64> {
    check_rows(store, values.len(), "integrand")?;
    check_rows(store, h.nrows(), "control matrix")?;
    let n = store.len();
    let w = store.weights();
    let total = w.sum();
    if !(total > 0.0) {
        return Err(Error::ZeroWeightSum);
    }
    let wmat = DMatrix::from_diagonal(w);
    let projector = if h.ncols() == 0 {
        DMatrix::zeros(n, n)
    } else {
        // Pi = W^{-1/2} U U' W^{1/2} with U spanning the range of W^{1/2} H.
        let sqrt_w = w.map(f64::sqrt);
        let mut scaled = h.clone();
        for (i, mut row) in scaled.row_iter_mut().enumerate() {
            row *= sqrt_w[i];
        }
        let svd = linalg::thin_svd(&scaled);
        let cutoff = linalg::RANK_RTOL * svd.values.first().copied().unwrap_or(0.0);
        let keep: Vec<usize> = (0..svd.values.len()).filter(|&j| svd.values[j] > cutoff).collect();
        let u = svd.u;
        let basis = u.select_columns(&keep);
        let mut pi = &basis * basis.transpose();
        for i in 0..n {
            for j in 0..n {
                if w[i] > 0.0 {
                    pi[(i, j)] *= sqrt_w[j] / sqrt_w[i];
                } else {
                    pi[(i, j)] = 0.0;
                }
            }
        }
        pi
    };
    let complement = DMatrix::identity(n, n) - projector;
    let form = complement.transpose() * &wmat * &complement;
    let ones = DVector::from_element(n, 1.0);
    let denom = ones.dot(&(&form * &ones));
    if !(denom > DEGENERACY_RTOL * total) {
        return Err(Error::DegenerateQuadrature {
            residual_mass: denom / total,
        });
    }
    Ok(ones.dot(&(&form * values)) / denom)
}

/// AISCV estimates with control matrix `h` and with `h A'` (the controls
/// `A h`). Both are returned so the caller can compare them.
pub fn invariance_check(
    store: &ParticleStore,
    h: &DMatrix<f64>,
    transform: &DMatrix<f64>,
    values: &DVector<f64>,
) -> Result<(f64, f64)> {
    let m = h.ncols();
    if transform.shape() != (m, m) {
        return Err(Error::dims(format!("transform must be {m}x{m}")));
    }
    let base = aiscv_fit(store, h, values)?.value;
    let moved = aiscv_fit(store, &(h * transform.transpose()), values)?.value;
    Ok((base, moved))
}
