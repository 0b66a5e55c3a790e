//! Control-variate families.
//!
//! Two constructions are provided:
//!
//! * [`ControlBasis::legendre_pairs`]: tensor products of shifted Legendre
//!   polynomials on `[0, 1]^d` with at most two active coordinates. Each
//!   column has mean zero under the uniform law on the cube.
//! * [`ControlBasis::stein_monomials`]: `L phi = lap phi + grad phi . grad log f`
//!   applied to every monomial `phi(x) = x^alpha` with `1 <= |alpha| <= Q`.
//!   Each column has mean zero under any smooth target `f` with light enough
//!   tails; only the score `grad log f` is needed.
//!
//! Column order is deterministic. Legendre columns list single-coordinate
//! terms first (coordinate-major, degree 1..=k), then pairs `j < l` with
//! degrees `(a, b)` in lexicographic order. Stein columns are graded
//! lexicographic: by total degree, then by exponent vector in descending
//! lexicographic order (`x1^2, x1 x2, ..., xd^2`).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::rng::RngStream;
use crate::targets::Target;

/// Gradient of the log target density, known up to nothing (the
/// normalizing constant drops out).
pub trait ScoreFunction: Send + Sync {
    fn dim(&self) -> usize;

    fn score_into(&self, x: &[f64], out: &mut [f64]);

    fn label(&self) -> &str {
        "score"
    }

    fn score(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.score_into(x, &mut out);
        out
    }
}

/// A score given by a closure.
pub struct FnScore<F> {
    dim: usize,
    label: String,
    f: F,
}

impl<F> FnScore<F>
where
    F: Fn(&[f64], &mut [f64]) + Send + Sync,
{
    pub fn new(dim: usize, label: impl Into<String>, f: F) -> Self {
        Self {
            dim,
            label: label.into(),
            f,
        }
    }
}

impl<F> ScoreFunction for FnScore<F>
where
    F: Fn(&[f64], &mut [f64]) + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn score_into(&self, x: &[f64], out: &mut [f64]) {
        (self.f)(x, out)
    }

    fn label(&self) -> &str {
        &self.label
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BasisKind {
    /// No control variates; every estimator reduces to plain AIS.
    Empty,
    LegendrePairs {
        max_degree: usize,
    },
    SteinMonomials {
        max_total_degree: usize,
    },
}

impl BasisKind {
    /// Parses `legendre:k=6`, `stein:q=2` or `none`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "none" || s == "empty" {
            return Ok(BasisKind::Empty);
        }
        let (name, rest) = s
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("basis `{s}` should look like legendre:k=6 or stein:q=2")))?;
        let (key, value) = rest
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("basis `{s}` is missing a degree")))?;
        let degree: usize = value
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("basis degree `{value}` is not an integer")))?;
        if degree == 0 {
            return Err(Error::Config("basis degree must be at least 1".into()));
        }
        match (name.trim(), key.trim()) {
            ("legendre", "k") => Ok(BasisKind::LegendrePairs { max_degree: degree }),
            ("stein", "q") | ("stein", "Q") => Ok(BasisKind::SteinMonomials {
                max_total_degree: degree,
            }),
            _ => Err(Error::Config(format!("unknown basis `{s}`"))),
        }
    }

    pub fn label(&self) -> String {
        match self {
            BasisKind::Empty => "none".into(),
            BasisKind::LegendrePairs { max_degree } => format!("legendre:k={max_degree}"),
            BasisKind::SteinMonomials { max_total_degree } => format!("stein:q={max_total_degree}"),
        }
    }

    pub fn needs_score(&self) -> bool {
        matches!(self, BasisKind::SteinMonomials { .. })
    }
}

/// A family `h: R^d -> R^m` described by its per-column degree vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlBasis {
    kind: BasisKind,
    dim: usize,
    degree_table: Vec<Vec<usize>>,
}

impl ControlBasis {
    pub fn empty(dim: usize) -> Self {
        Self {
            kind: BasisKind::Empty,
            dim,
            degree_table: Vec::new(),
        }
    }

    pub fn from_kind(kind: BasisKind, dim: usize) -> Result<Self> {
        match kind {
            BasisKind::Empty => Ok(Self::empty(dim)),
            BasisKind::LegendrePairs { max_degree } => Self::legendre_pairs(dim, max_degree),
            BasisKind::SteinMonomials { max_total_degree } => Self::stein_monomials(dim, max_total_degree),
        }
    }

    /// Shifted Legendre tensor products with at most two active coordinates,
    /// each of degree `1..=k`; `m = k d + k^2 d (d - 1) / 2`.
    pub fn legendre_pairs(dim: usize, k: usize) -> Result<Self> {
        if dim == 0 || k == 0 {
            return Err(Error::InvalidParameter("legendre basis needs d >= 1 and k >= 1".into()));
        }
        let mut table = Vec::with_capacity(legendre_pairs_count(dim, k));
        for j in 0..dim {
            for a in 1..=k {
                let mut row = vec![0; dim];
                row[j] = a;
                table.push(row);
            }
        }
        for j in 0..dim {
            for l in (j + 1)..dim {
                for a in 1..=k {
                    for b in 1..=k {
                        let mut row = vec![0; dim];
                        row[j] = a;
                        row[l] = b;
                        table.push(row);
                    }
                }
            }
        }
        Ok(Self {
            kind: BasisKind::LegendrePairs { max_degree: k },
            dim,
            degree_table: table,
        })
    }

    /// Stein operator applied to every monomial of total degree `1..=q`;
    /// `m = C(d + q, d) - 1`.
    pub fn stein_monomials(dim: usize, q: usize) -> Result<Self> {
        if dim == 0 || q == 0 {
            return Err(Error::InvalidParameter("stein basis needs d >= 1 and Q >= 1".into()));
        }
        let mut table = Vec::new();
        for total in 1..=q {
            let mut current = vec![0; dim];
            push_compositions(&mut table, &mut current, 0, total);
        }
        Ok(Self {
            kind: BasisKind::SteinMonomials { max_total_degree: q },
            dim,
            degree_table: table,
        })
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of control variates `m`.
    pub fn len(&self) -> usize {
        self.degree_table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.degree_table.is_empty()
    }

    pub fn degree_table(&self) -> &[Vec<usize>] {
        &self.degree_table
    }

    /// `H[i, j] = h_j(points[i])`. The score is required for Stein bases and
    /// ignored otherwise.
    pub fn evaluate(&self, points: &DMatrix<f64>, score: Option<&dyn ScoreFunction>) -> Result<DMatrix<f64>> {
        if points.ncols() != self.dim {
            return Err(Error::dims(format!(
                "points have {} columns, basis dimension is {}",
                points.ncols(),
                self.dim
            )));
        }
        let n = points.nrows();
        let m = self.len();
        let mut out = DMatrix::zeros(n, m);
        if m == 0 {
            return Ok(out);
        }
        match self.kind {
            BasisKind::Empty => {}
            BasisKind::LegendrePairs { max_degree } => self.fill_legendre(points, max_degree, &mut out),
            BasisKind::SteinMonomials { max_total_degree } => {
                let score = score
                    .ok_or_else(|| Error::InvalidParameter("stein control variates need a score function".into()))?;
                if score.dim() != self.dim {
                    return Err(Error::dims(format!(
                        "score has dimension {}, basis {}",
                        score.dim(),
                        self.dim
                    )));
                }
                self.fill_stein(points, max_total_degree, score, &mut out);
            }
        }
        Ok(out)
    }

    fn fill_legendre(&self, points: &DMatrix<f64>, k: usize, out: &mut DMatrix<f64>) {
        let d = self.dim;
        // values[j * (k + 1) + a] = P~_a(x_j)
        let mut values = vec![0.0; d * (k + 1)];
        for i in 0..points.nrows() {
            for j in 0..d {
                shifted_legendre_into(points[(i, j)], &mut values[j * (k + 1)..(j + 1) * (k + 1)]);
            }
            for (c, row) in self.degree_table.iter().enumerate() {
                let mut prod = 1.0;
                for (j, &a) in row.iter().enumerate() {
                    if a > 0 {
                        prod *= values[j * (k + 1) + a];
                    }
                }
                out[(i, c)] = prod;
            }
        }
    }

    fn fill_stein(&self, points: &DMatrix<f64>, q: usize, score: &dyn ScoreFunction, out: &mut DMatrix<f64>) {
        let d = self.dim;
        let sparse: Vec<Vec<(usize, usize)>> = self
            .degree_table
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|(_, &a)| a > 0)
                    .map(|(j, &a)| (j, a))
                    .collect()
            })
            .collect();
        let mut x = vec![0.0; d];
        let mut s = vec![0.0; d];
        // powers[j * (q + 1) + p] = x_j^p
        let mut powers = vec![0.0; d * (q + 1)];
        for i in 0..points.nrows() {
            for j in 0..d {
                x[j] = points[(i, j)];
                let base = j * (q + 1);
                powers[base] = 1.0;
                for p in 1..=q {
                    powers[base + p] = powers[base + p - 1] * x[j];
                }
            }
            score.score_into(&x, &mut s);
            for (c, terms) in sparse.iter().enumerate() {
                let mut value = 0.0;
                for (t, &(j, a)) in terms.iter().enumerate() {
                    // product of the other active factors
                    let mut others = 1.0;
                    for (u, &(l, b)) in terms.iter().enumerate() {
                        if u != t {
                            others *= powers[l * (q + 1) + b];
                        }
                    }
                    let grad = a as f64 * powers[j * (q + 1) + a - 1] * others;
                    value += grad * s[j];
                    if a >= 2 {
                        value += (a * (a - 1)) as f64 * powers[j * (q + 1) + a - 2] * others;
                    }
                }
                out[(i, c)] = value;
            }
        }
    }
}

fn push_compositions(table: &mut Vec<Vec<usize>>, current: &mut Vec<usize>, pos: usize, remaining: usize) {
    let d = current.len();
    if pos == d - 1 {
        current[pos] = remaining;
        table.push(current.clone());
        current[pos] = 0;
        return;
    }
    for a in (0..=remaining).rev() {
        current[pos] = a;
        push_compositions(table, current, pos + 1, remaining - a);
    }
    current[pos] = 0;
}

/// `k d + k^2 d (d - 1) / 2`.
pub fn legendre_pairs_count(dim: usize, k: usize) -> usize {
    k * dim + k * k * dim * (dim.saturating_sub(1)) / 2
}

/// `C(d + q, d) - 1`.
pub fn stein_monomials_count(dim: usize, q: usize) -> usize {
    let mut c: u128 = 1;
    for i in 1..=q as u128 {
        c = c * (dim as u128 + i) / i;
    }
    c as usize - 1
}

/// Fills `out[a] = P~_a(x)` for `a = 0..out.len()`, where `P~_a(x) = P_a(2x - 1)`
/// are the shifted Legendre polynomials.
pub fn shifted_legendre_into(x: f64, out: &mut [f64]) {
    let t = 2.0 * x - 1.0;
    if out.is_empty() {
        return;
    }
    out[0] = 1.0;
    if out.len() > 1 {
        out[1] = t;
    }
    for a in 1..out.len().saturating_sub(1) {
        let af = a as f64;
        out[a + 1] = ((2.0 * af + 1.0) * t * out[a] - af * out[a - 1]) / (af + 1.0);
    }
}

/// Self-normalized importance-sampling mean of each column divided by its
/// delta-method standard error.
pub fn importance_z_scores(h: &DMatrix<f64>, weights: &DVector<f64>) -> Result<Vec<f64>> {
    if h.nrows() != weights.len() {
        return Err(Error::dims("weights and control matrix disagree"));
    }
    let total = weights.sum();
    if !(total > 0.0) {
        return Err(Error::ZeroWeightSum);
    }
    Ok(h.column_iter()
        .map(|col| {
            let mean = col.dot(weights) / total;
            let var: f64 = col
                .iter()
                .zip(weights.iter())
                .map(|(v, w)| (w * (v - mean)).powi(2))
                .sum::<f64>()
                / (total * total);
            if var > 0.0 {
                mean / var.sqrt()
            } else if mean == 0.0 {
                0.0
            } else {
                f64::INFINITY.copysign(mean)
            }
        })
        .collect())
}

/// Checks the zero-mean premise of each column of `basis` under `target`,
/// importance sampling from `reference`. Returns one z-score per column.
pub fn weighted_zero_mean_check(
    basis: &ControlBasis,
    target: &dyn Target,
    reference: &dyn Policy,
    n_mc: usize,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    let points = reference.sample(n_mc, rng);
    let mut x = vec![0.0; target.dim()];
    let weights = DVector::from_iterator(
        n_mc,
        (0..n_mc).map(|i| {
            for (j, v) in x.iter_mut().enumerate() {
                *v = points[(i, j)];
            }
            let lf = target.log_density(&x);
            if lf == f64::NEG_INFINITY {
                0.0
            } else {
                (lf - reference.log_density(&x)).exp()
            }
        }),
    );
    let h = basis.evaluate(&points, target.score_function())?;
    importance_z_scores(&h, &weights)
}
