//! Target densities, their scores, and integrands with known integrals.
//!
//! Note on the linear-regression score: the gradient of
//! `-||y - X theta||^2 / (2 sigma^2)` is `X'(y - X theta) / sigma^2`. A factor
//! of `2 sigma^2` in the denominator is sometimes quoted for this score; it
//! does not match the likelihood and is not used here.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::control::ScoreFunction;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Support {
    Whole,
    UnitCube,
}

/// A density on `R^d` known up to a multiplicative constant.
pub trait Target: Send + Sync {
    fn dim(&self) -> usize;

    /// Unnormalized log density; `-inf` outside the support.
    fn log_density(&self, x: &[f64]) -> f64;

    fn score_function(&self) -> Option<&dyn ScoreFunction> {
        None
    }

    fn label(&self) -> String;

    fn support(&self) -> Support {
        Support::Whole
    }
}

/// Uniform density on `[0, 1]^d`.
#[derive(Debug, Clone)]
pub struct UniformCube {
    dim: usize,
}

pub fn uniform_cube_target(dim: usize) -> UniformCube {
    UniformCube { dim }
}

impl Target for UniformCube {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        if x.iter().all(|v| (0.0..=1.0).contains(v)) {
            0.0
        } else {
            f64::NEG_INFINITY
        }
    }

    fn label(&self) -> String {
        format!("uniform[0,1]^{}", self.dim)
    }

    fn support(&self) -> Support {
        Support::UnitCube
    }
}

/// How the error of an estimate is measured against the truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorScale {
    /// `||I_hat - I||`
    Absolute,
    /// `(I_hat - I) / I`, scalar integrands only.
    Relative,
}

type IntegrandFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;

/// A (possibly vector-valued) integrand with its exact integral.
#[derive(Clone)]
pub struct Integrand {
    name: String,
    truth: Vec<f64>,
    scale: ErrorScale,
    f: Arc<IntegrandFn>,
}

impl std::fmt::Debug for Integrand {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Integrand")
            .field("name", &self.name)
            .field("truth", &self.truth)
            .field("scale", &self.scale)
            .finish()
    }
}

impl Integrand {
    pub fn new(
        name: impl Into<String>,
        truth: Vec<f64>,
        scale: ErrorScale,
        f: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            truth,
            scale,
            f: Arc::new(f),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn truth(&self) -> &[f64] {
        &self.truth
    }

    pub fn scale(&self) -> ErrorScale {
        self.scale
    }

    /// Output dimension `p`.
    pub fn width(&self) -> usize {
        self.truth.len()
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        (self.f)(x, out)
    }

    /// Evaluates at every row of `points`; returns an `n x p` matrix.
    pub fn evaluate(&self, points: &DMatrix<f64>) -> DMatrix<f64> {
        let (n, d) = points.shape();
        let p = self.width();
        let mut out = DMatrix::zeros(n, p);
        let mut x = vec![0.0; d];
        let mut y = vec![0.0; p];
        for i in 0..n {
            for (j, v) in x.iter_mut().enumerate() {
                *v = points[(i, j)];
            }
            self.eval_into(&x, &mut y);
            for (k, v) in y.iter().enumerate() {
                out[(i, k)] = *v;
            }
        }
        out
    }

    /// Signed error (scalar) or Euclidean error norm (vector).
    pub fn error(&self, estimate: &[f64]) -> f64 {
        match self.scale {
            ErrorScale::Relative => (estimate[0] - self.truth[0]) / self.truth[0],
            ErrorScale::Absolute if self.width() == 1 => estimate[0] - self.truth[0],
            ErrorScale::Absolute => estimate
                .iter()
                .zip(&self.truth)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt(),
        }
    }
}

/// `g1(x) = 1 + sin(pi (2 mean(x) - 1))`.
pub fn cube_g1(x: &[f64]) -> f64 {
    let d = x.len() as f64;
    let s: f64 = x.iter().sum();
    1.0 + (PI * (2.0 * s / d - 1.0)).sin()
}

/// `g2(x) = prod (2/pi)^{1/2} x_i^{-1} exp(-log(x_i)^2 / 2)`; zero when any
/// coordinate is `<= 0` (the limit at 0).
pub fn cube_g2(x: &[f64]) -> f64 {
    let c = (2.0 / PI).sqrt();
    let mut prod = 1.0;
    for &v in x {
        if v <= 0.0 {
            return 0.0;
        }
        let l = v.ln();
        prod *= c / v * (-0.5 * l * l).exp();
    }
    prod
}

/// `g3(x) = prod log(2) 2^{1 - x_i}`.
pub fn cube_g3(x: &[f64]) -> f64 {
    x.iter().map(|&v| std::f64::consts::LN_2 * (1.0 - v).exp2()).product()
}

/// The three cube integrands, each integrating to 1 over `[0, 1]^d`.
pub fn cube_integrands(_dim: usize) -> Vec<Integrand> {
    vec![
        Integrand::new("g1", vec![1.0], ErrorScale::Absolute, |x, o| o[0] = cube_g1(x)),
        Integrand::new("g2", vec![1.0], ErrorScale::Absolute, |x, o| o[0] = cube_g2(x)),
        Integrand::new("g3", vec![1.0], ErrorScale::Absolute, |x, o| o[0] = cube_g3(x)),
    ]
}

/// `g(x) = x` with known mean.
pub fn identity_integrand(truth: Vec<f64>) -> Integrand {
    Integrand::new("x", truth, ErrorScale::Absolute, |x, o| o.copy_from_slice(x))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixtureVariant {
    Isotropic,
    Anisotropic,
}

impl std::str::FromStr for MixtureVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "isotropic" | "iso" => Ok(MixtureVariant::Isotropic),
            "anisotropic" | "aniso" => Ok(MixtureVariant::Anisotropic),
            other => Err(Error::Config(format!("unknown mixture variant `{other}`"))),
        }
    }
}

/// Two-component Gaussian mixture `w1 N(mu, C) + w2 N(-mu, C)` with
/// `mu = 1 / (2 sqrt d)`.
#[derive(Debug, Clone)]
pub struct GaussianMixture {
    dim: usize,
    variant: MixtureVariant,
    mix: [f64; 2],
    centers: [DVector<f64>; 2],
    chol: Cholesky<f64, Dyn>,
    log_norm: f64,
}

pub fn gaussian_mixture_target(dim: usize, variant: MixtureVariant) -> GaussianMixture {
    let d = dim as f64;
    let mu = DVector::from_element(dim, 1.0 / (2.0 * d.sqrt()));
    let (mix, cov) = match variant {
        MixtureVariant::Isotropic => ([0.5, 0.5], DMatrix::identity(dim, dim) / d),
        MixtureVariant::Anisotropic => {
            let mut diag = DVector::from_element(dim, 1.0 / d);
            diag[0] = 10.0 / d;
            ([0.75, 0.25], DMatrix::from_diagonal(&diag))
        }
    };
    GaussianMixture::new(mix, mu, cov, variant).expect("mixture covariance is positive definite")
}

impl GaussianMixture {
    fn new(mix: [f64; 2], mu: DVector<f64>, cov: DMatrix<f64>, variant: MixtureVariant) -> Result<Self> {
        let dim = mu.len();
        let chol = Cholesky::new(cov).ok_or(Error::NotPositiveDefinite)?;
        let half_log_det: f64 = chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum();
        let log_norm = -0.5 * dim as f64 * (2.0 * PI).ln() - half_log_det;
        Ok(Self {
            dim,
            variant,
            mix,
            centers: [mu.clone(), -mu],
            chol,
            log_norm,
        })
    }

    pub fn variant(&self) -> MixtureVariant {
        self.variant
    }

    /// `E_f[x] = w1 mu - w2 mu`.
    pub fn mean(&self) -> DVector<f64> {
        &self.centers[0] * self.mix[0] + &self.centers[1] * self.mix[1]
    }

    /// Log density and precision-weighted residual `C^{-1}(x - c_k)` per component.
    fn components(&self, x: &[f64]) -> [(f64, DVector<f64>); 2] {
        let xv = DVector::from_column_slice(x);
        let one = |k: usize| {
            let diff = &xv - &self.centers[k];
            let y = self
                .chol
                .l_dirty()
                .solve_lower_triangular(&diff)
                .expect("positive diagonal");
            let logp = self.mix[k].ln() + self.log_norm - 0.5 * y.norm_squared();
            (logp, self.chol.solve(&diff))
        };
        [one(0), one(1)]
    }
}

impl Target for GaussianMixture {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        let [(a, _), (b, _)] = self.components(x);
        let hi = a.max(b);
        hi + ((a - hi).exp() + (b - hi).exp()).ln()
    }

    fn score_function(&self) -> Option<&dyn ScoreFunction> {
        Some(self)
    }

    fn label(&self) -> String {
        format!("gaussian-mixture-{:?}-d{}", self.variant, self.dim).to_lowercase()
    }
}

impl ScoreFunction for GaussianMixture {
    fn dim(&self) -> usize {
        self.dim
    }

    /// Responsibility-weighted component scores.
    fn score_into(&self, x: &[f64], out: &mut [f64]) {
        let [(a, ga), (b, gb)] = self.components(x);
        let hi = a.max(b);
        let (ea, eb) = ((a - hi).exp(), (b - hi).exp());
        let (ra, rb) = (ea / (ea + eb), eb / (ea + eb));
        for j in 0..self.dim {
            out[j] = -(ra * ga[j] + rb * gb[j]);
        }
    }

    fn label(&self) -> &str {
        "gaussian mixture"
    }
}

/// Gaussian prior `N(mean, cov)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrior {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianPrior {
    /// `N(0, variance * I)`.
    pub fn isotropic(dim: usize, variance: f64) -> Self {
        Self {
            mean: DVector::zeros(dim),
            cov: DMatrix::identity(dim, dim) * variance,
        }
    }
}

/// Posterior of Bayesian linear regression with known noise level and a
/// Gaussian prior; the posterior is `N(mu_b, Sigma_b)`.
#[derive(Debug, Clone)]
pub struct BlrPosterior {
    x: DMatrix<f64>,
    y: DVector<f64>,
    sigma: f64,
    prior: GaussianPrior,
    prior_precision: DMatrix<f64>,
    precision: DMatrix<f64>,
    /// `X'y / sigma^2 + Sigma_a^{-1} mu_a`; the score is `shift - precision theta`.
    shift: DVector<f64>,
    post_mean: DVector<f64>,
    post_cov: DMatrix<f64>,
}

pub fn blr_posterior(x: DMatrix<f64>, y: DVector<f64>, sigma: f64, prior: GaussianPrior) -> Result<BlrPosterior> {
    BlrPosterior::new(x, y, sigma, prior)
}

impl BlrPosterior {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, sigma: f64, prior: GaussianPrior) -> Result<Self> {
        let (n, d) = x.shape();
        if y.len() != n {
            return Err(Error::dims(format!("{n} feature rows but {} responses", y.len())));
        }
        if prior.mean.len() != d || prior.cov.shape() != (d, d) {
            return Err(Error::dims("prior does not match the number of features"));
        }
        if !(sigma > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "noise level must be positive, got {sigma}"
            )));
        }
        let prior_chol = Cholesky::new(prior.cov.clone()).ok_or(Error::SingularPrior)?;
        let prior_precision = prior_chol.inverse();
        let s2 = sigma * sigma;
        let precision = x.transpose() * &x / s2 + &prior_precision;
        let shift = x.transpose() * &y / s2 + prior_chol.solve(&prior.mean);
        let post_chol = Cholesky::new(precision.clone()).ok_or(Error::NotPositiveDefinite)?;
        let post_mean = post_chol.solve(&shift);
        let post_cov = post_chol.inverse();
        Ok(Self {
            x,
            y,
            sigma,
            prior,
            prior_precision,
            precision,
            shift,
            post_mean,
            post_cov,
        })
    }

    pub fn posterior_mean(&self) -> &DVector<f64> {
        &self.post_mean
    }

    pub fn posterior_cov(&self) -> &DMatrix<f64> {
        &self.post_cov
    }

    pub fn prior(&self) -> &GaussianPrior {
        &self.prior
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn num_observations(&self) -> usize {
        self.x.nrows()
    }

    /// `E[||theta||^2] = ||mu_b||^2 + tr(Sigma_b)`.
    pub fn squared_norm_truth(&self) -> f64 {
        self.post_mean.norm_squared() + self.post_cov.trace()
    }

    pub fn squared_norm_integrand(&self) -> Integrand {
        Integrand::new(
            "sqnorm",
            vec![self.squared_norm_truth()],
            ErrorScale::Relative,
            |x, o| o[0] = x.iter().map(|v| v * v).sum(),
        )
    }
}

impl Target for BlrPosterior {
    fn dim(&self) -> usize {
        self.x.ncols()
    }

    /// `-||y - X theta||^2 / (2 sigma^2) - (theta - mu_a)' Sigma_a^{-1} (theta - mu_a) / 2`.
    fn log_density(&self, theta: &[f64]) -> f64 {
        let t = DVector::from_column_slice(theta);
        let resid = &self.y - &self.x * &t;
        let dev = &t - &self.prior.mean;
        let quad = dev.dot(&(&self.prior_precision * &dev));
        -resid.norm_squared() / (2.0 * self.sigma * self.sigma) - 0.5 * quad
    }

    fn score_function(&self) -> Option<&dyn ScoreFunction> {
        Some(self)
    }

    fn label(&self) -> String {
        format!("blr-posterior-N{}-d{}", self.x.nrows(), self.x.ncols())
    }
}

impl ScoreFunction for BlrPosterior {
    fn dim(&self) -> usize {
        self.x.ncols()
    }

    /// `X'(y - X theta) / sigma^2 - Sigma_a^{-1} (theta - mu_a)`.
    fn score_into(&self, theta: &[f64], out: &mut [f64]) {
        let d = self.x.ncols();
        for (i, o) in out.iter_mut().enumerate().take(d) {
            let mut acc = self.shift[i];
            for (j, t) in theta.iter().enumerate() {
                acc -= self.precision[(i, j)] * t;
            }
            *o = acc;
        }
    }

    fn label(&self) -> &str {
        "linear regression posterior"
    }
}

fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// Logistic-regression log-likelihood `sum y_i s_i - log(1 + e^{s_i})`, `s = X theta`.
pub fn logistic_log_likelihood(x: &DMatrix<f64>, y: &DVector<f64>, theta: &DVector<f64>) -> f64 {
    let s = x * theta;
    s.iter()
        .zip(y.iter())
        .map(|(&si, &yi)| {
            // log(1 + e^s) computed without overflow
            let softplus = if si > 0.0 {
                si + (-si).exp().ln_1p()
            } else {
                si.exp().ln_1p()
            };
            yi * si - softplus
        })
        .sum()
}

/// `X'(y - sigmoid(X theta))`.
pub fn logistic_score(x: &DMatrix<f64>, y: &DVector<f64>, theta: &DVector<f64>) -> DVector<f64> {
    let s = x * theta;
    let resid = DVector::from_iterator(y.len(), y.iter().zip(s.iter()).map(|(&yi, &si)| yi - sigmoid(si)));
    x.transpose() * resid
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use rand::Rng;
    use rand_distr::StandardNormal;

    /// Central finite differences of a log density.
    fn fd_gradient(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
        (0..x.len())
            .map(|j| {
                let mut up = x.to_vec();
                let mut down = x.to_vec();
                up[j] += h;
                down[j] -= h;
                (f(&up) - f(&down)) / (2.0 * h)
            })
            .collect()
    }

    fn assert_score_matches(target: &dyn Target, points: &[Vec<f64>], h: f64) {
        let score = target.score_function().unwrap();
        for x in points {
            let fd = fd_gradient(&|p: &[f64]| target.log_density(p), x, h);
            let an = score.score(x);
            let scale = fd.iter().map(|v| v.abs()).fold(1.0, f64::max);
            for (a, b) in an.iter().zip(&fd) {
                assert!((a - b).abs() <= 1e-5 * scale, "analytic {a} vs fd {b}");
            }
        }
    }

    #[test]
    fn cube_support() {
        let t = uniform_cube_target(3);
        assert_eq!(t.log_density(&[0.5, 0.5, 0.5]), 0.0);
        assert_eq!(t.log_density(&[0.5, 1.2, 0.5]), f64::NEG_INFINITY);
        assert_eq!(t.log_density(&[-0.01, 0.2, 0.5]), f64::NEG_INFINITY);
        assert!(t.score_function().is_none());
    }

    #[test]
    fn cube_integrand_values() {
        assert!((cube_g1(&[0.5; 4]) - 1.0).abs() < 1e-15);
        assert_eq!(cube_g2(&[0.0, 0.5]), 0.0);
        assert_eq!(cube_g2(&[-0.3, 0.5]), 0.0);
        assert!((cube_g3(&[1.0, 1.0]) - std::f64::consts::LN_2.powi(2)).abs() < 1e-15);
    }

    #[test]
    fn cube_integrands_integrate_to_one() {
        // plain Monte Carlo on [0,1]^4, 1e6 points, 3 standard errors
        let mut rng = RngStream::new(12, 0);
        let n = 1_000_000;
        let gs: [fn(&[f64]) -> f64; 3] = [cube_g1, cube_g2, cube_g3];
        let mut sums = [0.0; 3];
        let mut sq = [0.0; 3];
        let mut x = [0.0; 4];
        for _ in 0..n {
            for v in x.iter_mut() {
                *v = rng.random::<f64>();
            }
            for k in 0..3 {
                let g = gs[k](&x);
                sums[k] += g;
                sq[k] += g * g;
            }
        }
        for k in 0..3 {
            let mean = sums[k] / n as f64;
            let var = sq[k] / n as f64 - mean * mean;
            let se = (var / n as f64).sqrt();
            assert!((mean - 1.0).abs() <= 3.0 * se, "g{}: {mean} +- {se}", k + 1);
        }
    }

    #[test]
    fn mixture_moments_and_symmetry() {
        let iso = gaussian_mixture_target(4, MixtureVariant::Isotropic);
        assert!(iso.mean().amax() < 1e-15);
        let s = iso.score_function().unwrap().score(&[0.0; 4]);
        assert!(s.iter().all(|v| v.abs() < 1e-14));

        let ani = gaussian_mixture_target(4, MixtureVariant::Anisotropic);
        let mu = 1.0 / (2.0 * 2.0);
        for v in ani.mean().iter() {
            assert!((v - 0.5 * mu).abs() < 1e-15);
        }
    }

    #[test]
    fn mixture_scores_match_finite_differences() {
        let mut rng = RngStream::new(2, 0);
        for variant in [MixtureVariant::Isotropic, MixtureVariant::Anisotropic] {
            let t = gaussian_mixture_target(4, variant);
            let pts: Vec<Vec<f64>> = (0..10)
                .map(|_| (0..4).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
                .collect();
            assert_score_matches(&t, &pts, 1e-5);
        }
    }

    #[test]
    fn mixture_is_normalized() {
        use crate::policy::{Policy, StudentTPolicy};
        let t = gaussian_mixture_target(3, MixtureVariant::Anisotropic);
        let reference = StudentTPolicy::with_covariance(DVector::zeros(3), DMatrix::identity(3, 3) * 3.0, 5.0).unwrap();
        let n = 100_000;
        let xs = reference.sample(n, &mut RngStream::new(77, 0));
        let r: Vec<f64> = (0..n)
            .map(|i| {
                let x: Vec<f64> = xs.row(i).iter().cloned().collect();
                (t.log_density(&x) - reference.log_density(&x)).exp()
            })
            .collect();
        let mean = r.iter().sum::<f64>() / n as f64;
        let var = r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        assert!((mean - 1.0).abs() <= 3.0 * (var / n as f64).sqrt(), "{mean}");
    }

    fn small_regression(seed: u64, n: usize, d: usize) -> (DMatrix<f64>, DVector<f64>) {
        let mut rng = RngStream::new(seed, 0);
        let x = DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let beta = DVector::from_fn(d, |i, _| i as f64 - 1.0);
        let y = &x * beta + DVector::from_fn(n, |_, _| 0.5 * rng.sample::<f64, _>(StandardNormal));
        (x, y)
    }

    #[test]
    fn blr_score_matches_finite_differences() {
        let (x, y) = small_regression(3, 30, 3);
        let post = blr_posterior(x, y, 2.0, GaussianPrior::isotropic(3, 100.0)).unwrap();
        let mut rng = RngStream::new(4, 0);
        let pts: Vec<Vec<f64>> = (0..10)
            .map(|_| (0..3).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        assert_score_matches(&post, &pts, 1e-5);
    }

    #[test]
    fn blr_without_data_is_prior() {
        let prior = GaussianPrior {
            mean: DVector::from_vec(vec![1.0, -2.0]),
            cov: DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]),
        };
        let post = blr_posterior(DMatrix::zeros(5, 2), DVector::from_element(5, 3.0), 1.0, prior.clone()).unwrap();
        assert!((post.posterior_mean() - &prior.mean).amax() < 1e-12);
        assert!((post.posterior_cov() - &prior.cov).amax() < 1e-12);
    }

    #[test]
    fn blr_posterior_closed_form() {
        let (x, y) = small_regression(5, 40, 3);
        let sigma = 1.5;
        let prior = GaussianPrior::isotropic(3, 4.0);
        let post = blr_posterior(x.clone(), y.clone(), sigma, prior.clone()).unwrap();
        // Sigma_b^{-1} mu_b reproduces the right-hand side.
        let prec = x.transpose() * &x / (sigma * sigma) + DMatrix::identity(3, 3) / 4.0;
        let rhs = x.transpose() * &y / (sigma * sigma);
        assert!((&prec * post.posterior_mean() - rhs).amax() < 1e-10);
        assert!((&prec * post.posterior_cov() - DMatrix::<f64>::identity(3, 3)).amax() < 1e-10);

        // log posterior minus Gaussian log density is constant
        let cov_chol = Cholesky::new(post.posterior_cov().clone()).unwrap();
        let mut rng = RngStream::new(6, 0);
        let diffs: Vec<f64> = (0..20)
            .map(|_| {
                let th = DVector::from_fn(3, |_, _| rng.sample::<f64, _>(StandardNormal));
                let dev = &th - post.posterior_mean();
                let gauss = -0.5 * dev.dot(&cov_chol.solve(&dev));
                post.log_density(th.as_slice()) - gauss
            })
            .collect();
        let lo = diffs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = diffs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(hi - lo < 1e-8, "spread {}", hi - lo);
    }

    #[test]
    fn blr_truth_by_direct_sampling() {
        let (x, y) = small_regression(8, 25, 2);
        let post = blr_posterior(x, y, 1.0, GaussianPrior::isotropic(2, 10.0)).unwrap();
        let chol = Cholesky::new(post.posterior_cov().clone()).unwrap();
        let mut rng = RngStream::new(9, 0);
        let n = 1_000_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let z = DVector::from_fn(2, |_, _| rng.sample::<f64, _>(StandardNormal));
            let th = post.posterior_mean() + chol.l() * z;
            let g = th.norm_squared();
            s += g;
            s2 += g * g;
        }
        let mean = s / n as f64;
        let se = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
        assert!((mean - post.squared_norm_truth()).abs() <= 3.0 * se);
    }

    #[test]
    fn singular_prior_is_rejected() {
        let prior = GaussianPrior {
            mean: DVector::zeros(2),
            cov: DMatrix::zeros(2, 2),
        };
        assert!(matches!(
            blr_posterior(DMatrix::zeros(3, 2), DVector::zeros(3), 1.0, prior),
            Err(Error::SingularPrior)
        ));
    }

    #[test]
    fn logistic_score_examples() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.5, -0.3, 2.0, 0.8, -1.0]);
        let y = DVector::from_vec(vec![1.0, 0.0, 1.0]);
        let at_zero = logistic_score(&x, &y, &DVector::zeros(2));
        let want = x.transpose() * y.map(|v| v - 0.5);
        assert!((at_zero - want).amax() < 1e-15);

        let theta = DVector::from_vec(vec![0.3, -0.7]);
        let an = logistic_score(&x, &y, &theta);
        let fd = fd_gradient(
            &|t: &[f64]| logistic_log_likelihood(&x, &y, &DVector::from_column_slice(t)),
            theta.as_slice(),
            1e-6,
        );
        for (a, b) in an.iter().zip(&fd) {
            assert!((a - b).abs() < 1e-5 * (1.0 + b.abs()));
        }

        let one = DMatrix::from_element(1, 1, 1.0);
        let s = logistic_score(&one, &DVector::from_element(1, 1.0), &DVector::from_element(1, 50.0));
        assert!(s[0].abs() < 1e-20);
    }
}
