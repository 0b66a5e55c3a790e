//! Weighted averages and weighted least squares.
//!
//! The least-squares solver centres the design with the importance weights
//! (when an intercept is requested), scales rows by `sqrt(w)`, reduces the
//! tall system with a Householder QR and finishes with an SVD of the small
//! triangular factor (computed with `faer`). Singular values below [`RANK_RTOL`] times the largest
//! one are treated as zero, which yields the minimum-norm coefficient vector
//! when the design is rank deficient.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative singular-value cutoff used to decide the numerical rank.
pub const RANK_RTOL: f64 = 1e-10;

/// Solution of a weighted least-squares problem.
#[derive(Debug, Clone, PartialEq)]
pub struct WlsSolution {
    pub intercept: f64,
    pub coefficients: DVector<f64>,
    pub fitted: DVector<f64>,
    pub residuals: DVector<f64>,
    pub rank: usize,
}

fn check_weights(weights: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for &w in weights {
        if !w.is_finite() || w < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "importance weights must be finite and nonnegative, got {w}"
            )));
        }
        total += w;
    }
    if total > 0.0 {
        Ok(total)
    } else {
        Err(Error::ZeroWeightSum)
    }
}

/// `sum(w_i v_i) / sum(w_i)`.
pub fn weighted_mean(values: &[f64], weights: &[f64]) -> Result<f64> {
    if values.len() != weights.len() {
        return Err(Error::dims(format!(
            "{} values but {} weights",
            values.len(),
            weights.len()
        )));
    }
    let total = check_weights(weights)?;
    let acc: f64 = values.iter().zip(weights).map(|(v, w)| v * w).sum();
    Ok(acc / total)
}

/// Minimizes `sum_i w_i (response_i - a - b' design_i)^2` over `b` (and `a`
/// when `with_intercept` is set).
pub fn wls_fit(
    response: &DVector<f64>,
    design: &DMatrix<f64>,
    weights: &DVector<f64>,
    with_intercept: bool,
) -> Result<WlsSolution> {
    let n = response.len();
    let m = design.ncols();
    if design.nrows() != n || weights.len() != n {
        return Err(Error::dims(format!(
            "response has {n} rows, design {}x{m}, weights {}",
            design.nrows(),
            weights.len()
        )));
    }
    if n == 0 {
        return Err(Error::dims("least squares needs at least one row"));
    }
    let total = check_weights(weights.as_slice())?;

    let (response_mean, column_means) = if with_intercept {
        let ybar = response.dot(weights) / total;
        let hbar = DVector::from_iterator(m, design.column_iter().map(|c| c.dot(weights) / total));
        (ybar, hbar)
    } else {
        (0.0, DVector::zeros(m))
    };

    let sqrt_w = weights.map(f64::sqrt);
    let mut scaled = DMatrix::<f64>::zeros(n, m);
    for j in 0..m {
        let mean = column_means[j];
        let src = design.column(j);
        let mut dst = scaled.column_mut(j);
        for i in 0..n {
            dst[i] = sqrt_w[i] * (src[i] - mean);
        }
    }
    let rhs = DVector::from_iterator(
        n,
        response.iter().zip(sqrt_w.iter()).map(|(y, s)| s * (y - response_mean)),
    );

    let (coefficients, rank) = min_norm_lstsq(scaled, rhs, RANK_RTOL);

    let intercept = if with_intercept {
        response_mean - column_means.dot(&coefficients)
    } else {
        0.0
    };
    let mut fitted = design * &coefficients;
    fitted.add_scalar_mut(intercept);
    let residuals = response - &fitted;

    Ok(WlsSolution {
        intercept,
        coefficients,
        fitted,
        residuals,
        rank,
    })
}

/// Minimum-norm solution of `min ||a x - b||` with relative rank cutoff.
pub(crate) fn min_norm_lstsq(a: DMatrix<f64>, b: DVector<f64>, rtol: f64) -> (DVector<f64>, usize) {
    let (n, m) = a.shape();
    if m == 0 {
        return (DVector::zeros(0), 0);
    }
    // Reduce to an m x m triangle first when the system is tall.
    let (core, rhs) = if n > m {
        let qr = a.qr();
        let mut qtb = b;
        qr.q_tr_mul(&mut qtb);
        (qr.r(), qtb.rows(0, m).into_owned())
    } else {
        (a, b)
    };

    let svd = thin_svd(&core);
    let smax = svd.values.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return (DVector::zeros(m), 0);
    }
    let cutoff = rtol * smax;

    let mut coef = DVector::zeros(m);
    let mut rank = 0;
    for (k, &s) in svd.values.iter().enumerate() {
        if s > cutoff {
            rank += 1;
            let proj = svd.u.column(k).dot(&rhs) / s;
            coef.axpy(proj, &svd.v.column(k), 1.0);
        }
    }
    (coef, rank)
}

/// Thin SVD `a = u diag(values) v'` with singular values in decreasing order.
pub(crate) struct ThinSvd {
    pub u: DMatrix<f64>,
    pub values: Vec<f64>,
    pub v: DMatrix<f64>,
}

pub(crate) fn thin_svd(a: &DMatrix<f64>) -> ThinSvd {
    let (n, m) = a.shape();
    let k = n.min(m);
    if k == 0 {
        return ThinSvd {
            u: DMatrix::zeros(n, 0),
            values: Vec::new(),
            v: DMatrix::zeros(m, 0),
        };
    }
    let mat = faer::Mat::from_fn(n, m, |i, j| a[(i, j)]);
    let svd = mat.thin_svd().expect("svd of a finite matrix converges");
    let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
    let mut values: Vec<f64> = (0..k).map(|j| s[j]).collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&x, &y| values[y].total_cmp(&values[x]));
    values = order.iter().map(|&j| values[j]).collect();
    ThinSvd {
        u: DMatrix::from_fn(n, k, |i, j| u[(i, order[j])]),
        values,
        v: DMatrix::from_fn(m, k, |i, j| v[(i, order[j])]),
    }
}

/// Numerical rank of `diag(sqrt w) * a` under [`RANK_RTOL`].
pub(crate) fn weighted_rank(a: &DMatrix<f64>, weights: &DVector<f64>) -> usize {
    let (n, m) = a.shape();
    if m == 0 {
        return 0;
    }
    let mut scaled = a.clone();
    for i in 0..n {
        let s = weights[i].sqrt();
        scaled.row_mut(i).scale_mut(s);
    }
    let core = if n > m { scaled.qr().r() } else { scaled };
    let sv = thin_svd(&core).values;
    let smax = sv.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_RTOL * smax).count()
}
