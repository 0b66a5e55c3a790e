//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use aiscv::control::{BasisKind, ControlBasis, FnScore, ScoreFunction};
use aiscv::estimator::{aiscv_fit, build_quadrature, invariance_check, matrix_form_oracle};
use aiscv::harness::{
    write_rows_csv, ColumnRef, Delimiter, Experiment, ExperimentResult, ExperimentSpec, Family, ReplicationOutcome,
};
use aiscv::particles::ParticleStore;
use aiscv::rng::RngStream;
use aiscv::targets::{gaussian_mixture_target, identity_integrand, GaussianMixture, MixtureVariant, Support, Target};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

struct Report {
    lines: Vec<(bool, String)>,
}

impl Report {
    fn record(&mut self, name: &str, passed: bool, detail: String) {
        let line = format!("{} {name}: {detail}", if passed { "PASS" } else { "FAIL" });
        println!("{line}");
        self.lines.push((passed, line));
    }
}

fn secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

// ---------------------------------------------------------------------------
// Random instances

struct Instance {
    store: ParticleStore,
    h: DMatrix<f64>,
}

fn gaussian_score(mean: Vec<f64>, var: Vec<f64>) -> FnScore<impl Fn(&[f64], &mut [f64]) + Send + Sync> {
    let d = mean.len();
    FnScore::new(d, "gaussian", move |x: &[f64], out: &mut [f64]| {
        for j in 0..x.len() {
            out[j] = -(x[j] - mean[j]) / var[j];
        }
    })
}

/// Half Legendre designs on the cube, half Stein designs on a Gaussian.
fn random_instance(rng: &mut RngStream, max_n: usize, max_m: usize) -> Instance {
    let d = rng.random_range(1..=4usize);
    let legendre = rng.random_bool(0.5);
    let degrees: Vec<usize> = (1..=8)
        .filter(|&k| {
            let m = if legendre {
                aiscv::control::legendre_pairs_count(d, k)
            } else {
                aiscv::control::stein_monomials_count(d, k)
            };
            m <= max_m
        })
        .collect();
    let k = degrees[rng.random_range(0..degrees.len())];
    let (basis, points, h);
    if legendre {
        basis = ControlBasis::legendre_pairs(d, k).unwrap();
        let n = rng.random_range(basis.len() + 10..=max_n);
        points = DMatrix::from_fn(n, d, |_, _| rng.random::<f64>());
        h = basis.evaluate(&points, None).unwrap();
    } else {
        basis = ControlBasis::stein_monomials(d, k).unwrap();
        let n = rng.random_range(basis.len() + 10..=max_n);
        let mean: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let var: Vec<f64> = (0..d).map(|_| rng.random_range(0.5..2.0)).collect();
        points = DMatrix::from_fn(n, d, |_, j| {
            let z: f64 = StandardNormal.sample(rng);
            mean[j] + 1.5 * var[j].sqrt() * z
        });
        let score = gaussian_score(mean, var);
        h = basis.evaluate(&points, Some(&score)).unwrap();
    }
    let n = points.nrows();
    let weights = DVector::from_fn(n, |_, _| (rng.random_range(-2.0..2.0f64)).exp());
    Instance {
        store: ParticleStore::from_parts(points, weights).unwrap(),
        h,
    }
}

fn smooth_integrand(store: &ParticleStore) -> DVector<f64> {
    DVector::from_fn(store.len(), |i, _| {
        let x = store.points().row(i);
        x.iter().map(|v| v.exp()).sum::<f64>() + (2.0 * x[0]).sin()
    })
}

// ---------------------------------------------------------------------------
// Estimator properties

fn exactness(report: &mut Report) {
    let start = Instant::now();
    let mut rng = RngStream::new(1001, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let inst = random_instance(&mut rng, 500, 20);
        let alpha = rng.random_range(-10.0..10.0);
        let beta = DVector::from_fn(inst.h.ncols(), |_, _| rng.random_range(-5.0..5.0));
        let g = (&inst.h * &beta).add_scalar(alpha);
        let fit = aiscv_fit(&inst.store, &inst.h, &g).unwrap().value;
        let quad = build_quadrature(&inst.store, &inst.h)
            .unwrap()
            .apply_vector(&g)
            .unwrap();
        for est in [fit, quad] {
            worst = worst.max((est - alpha).abs() / (1.0 + alpha.abs()));
        }
    }
    let elapsed = start.elapsed();
    report.record(
        "exactness for planted integrands",
        worst <= 1e-9 && elapsed < Duration::from_secs(10),
        format!(
            "100 configs, worst |a_hat - a|/(1+|a|) = {worst:.2e} (tol 1e-9), {}",
            secs(elapsed)
        ),
    );
}

fn oracle_agreement(report: &mut Report) {
    let start = Instant::now();
    let mut rng = RngStream::new(1002, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let inst = random_instance(&mut rng, 200, 20);
        let g = smooth_integrand(&inst.store);
        let a = aiscv_fit(&inst.store, &inst.h, &g).unwrap().value;
        let b = build_quadrature(&inst.store, &inst.h)
            .unwrap()
            .apply_vector(&g)
            .unwrap();
        let c = matrix_form_oracle(&inst.store, &inst.h, &g).unwrap();
        for (x, y) in [(a, b), (a, c), (b, c)] {
            worst = worst.max((x - y).abs() / x.abs().max(y.abs()));
        }
    }
    let elapsed = start.elapsed();
    report.record(
        "regression, quadrature and matrix forms agree",
        worst <= 1e-10 && elapsed < Duration::from_secs(30),
        format!(
            "100 instances, worst relative gap {worst:.2e} (tol 1e-10), {}",
            secs(elapsed)
        ),
    );
}

fn invariance(report: &mut Report) {
    let start = Instant::now();
    let mut rng = RngStream::new(1003, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let inst = random_instance(&mut rng, 300, 20);
        let m = inst.h.ncols();
        // Orthogonal factor times singular values in [0.5, 2]: cond(A) <= 4.
        let gauss: DMatrix<f64> = DMatrix::from_fn(m, m, |_, _| StandardNormal.sample(&mut rng));
        let q = gauss.qr().q();
        let s = DMatrix::from_diagonal(&DVector::from_fn(m, |_, _| rng.random_range(0.5..2.0)));
        let a = &q * s;
        let g = smooth_integrand(&inst.store);
        let (base, moved) = invariance_check(&inst.store, &inst.h, &a, &g).unwrap();
        worst = worst.max((base - moved).abs() / base.abs().max(1.0));
    }
    let elapsed = start.elapsed();
    report.record(
        "invariance under invertible transforms of the controls",
        worst <= 1e-8 && elapsed < Duration::from_secs(10),
        format!("50 transforms, worst gap {worst:.2e} (tol 1e-8), {}", secs(elapsed)),
    );
}

/// A target whose density is multiplied by `exp(log_c)`.
struct Scaled {
    inner: GaussianMixture,
    log_c: f64,
}

impl Target for Scaled {
    fn dim(&self) -> usize {
        Target::dim(&self.inner)
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        self.inner.log_density(x) + self.log_c
    }

    fn score_function(&self) -> Option<&dyn ScoreFunction> {
        self.inner.score_function()
    }

    fn label(&self) -> String {
        format!("scaled {}", Target::label(&self.inner))
    }

    fn support(&self) -> Support {
        self.inner.support()
    }
}

fn scaled_run(c: f64) -> Vec<f64> {
    let d = 2;
    let mut spec = ExperimentSpec::defaults(Family::Mixture);
    spec.dim = d;
    spec.variant = MixtureVariant::Anisotropic;
    spec.stages = vec![2, 4];
    spec.per_stage = 500;
    let inner = gaussian_mixture_target(d, spec.variant);
    let integrand = identity_integrand(inner.mean().as_slice().to_vec());
    let target = Arc::new(Scaled { inner, log_c: c.ln() });
    let mean = DVector::from_vec(vec![1.0, -1.0]) / (d as f64).sqrt();
    let cov = DMatrix::identity(d, d) * (5.0 / d as f64);
    let exp = Experiment::custom(&spec, target, vec![integrand], mean, cov).unwrap();
    match exp.run_replication(0).unwrap() {
        ReplicationOutcome::Completed(rows) => rows.into_iter().flat_map(|r| r.estimate).collect(),
        ReplicationOutcome::Failed(f) => panic!("replication failed: {}", f.reason),
    }
}

fn weight_scaling(report: &mut Report) {
    let mut worst: f64 = 0.0;
    let mut rng = RngStream::new(1004, 0);
    for _ in 0..20 {
        let inst = random_instance(&mut rng, 300, 20);
        let g = smooth_integrand(&inst.store);
        let reference = [
            aiscv_fit(&inst.store, &inst.h, &g).unwrap().value,
            build_quadrature(&inst.store, &inst.h)
                .unwrap()
                .apply_vector(&g)
                .unwrap(),
        ];
        for c in [1e-3, 1.0, 1e3] {
            let scaled = inst.store.with_scaled_weights(c);
            let est = [
                aiscv_fit(&scaled, &inst.h, &g).unwrap().value,
                build_quadrature(&scaled, &inst.h).unwrap().apply_vector(&g).unwrap(),
            ];
            for (a, b) in est.iter().zip(&reference) {
                worst = worst.max((a - b).abs() / b.abs());
            }
        }
    }
    let reference = scaled_run(1.0);
    for c in [1e-3, 1.0, 1e3] {
        for (a, b) in scaled_run(c).iter().zip(&reference) {
            worst = worst.max((a - b).abs() / b.abs());
        }
    }
    report.record(
        "unnormalized target invariance",
        worst <= 1e-12,
        format!("c in {{1e-3, 1, 1e3}}, worst relative change {worst:.2e} (tol 1e-12)"),
    );
}

// ---------------------------------------------------------------------------
// Experiments

fn ratio(result: &ExperimentResult, method: &str, integrand: &str, n: usize) -> (f64, f64, f64) {
    let ais = result.mse("ais", integrand, n).unwrap();
    let cv = result.mse(method, integrand, n).unwrap();
    (ais, cv, ais / cv)
}

fn cube_spec() -> ExperimentSpec {
    let mut spec = ExperimentSpec::defaults(Family::Cube);
    spec.dim = 4;
    spec.bases = vec![BasisKind::LegendrePairs { max_degree: 6 }];
    spec.stages = vec![5, 20];
    spec.per_stage = 1000;
    spec.reps = 20;
    spec.integrands = vec!["g1".into()];
    spec
}

fn cube_experiment(report: &mut Report) -> Vec<u8> {
    let start = Instant::now();
    let spec = cube_spec();
    let result = Experiment::prepare(&spec).unwrap().run().unwrap();
    let method = "aiscv[legendre:k=6]";
    for (n, factor) in [(5000, 2.0), (20000, 5.0)] {
        let (ais, cv, r) = ratio(&result, method, "g1", n);
        report.record(
            &format!("cube g1 d=4 legendre k=6 R=20, n={n}"),
            r >= factor,
            format!(
                "MSE ais {ais:.2e}, aiscv {cv:.2e}, ratio {r:.2} (need >= {factor}), {}",
                secs(start.elapsed())
            ),
        );
    }
    let mut bytes = Vec::new();
    write_rows_csv(&result, &mut bytes).unwrap();
    bytes
}

fn determinism(report: &mut Report, first: &[u8]) {
    let spec = cube_spec();
    let result = Experiment::prepare(&spec).unwrap().run().unwrap();
    let mut second = Vec::new();
    write_rows_csv(&result, &mut second).unwrap();
    report.record(
        "byte-identical output for a repeated seeded run",
        first == second.as_slice(),
        format!(
            "{} bytes per run, identical = {}",
            first.len(),
            first == second.as_slice()
        ),
    );
}

fn mixture_experiment(report: &mut Report) {
    let start = Instant::now();
    let mut spec = ExperimentSpec::defaults(Family::Mixture);
    spec.dim = 4;
    spec.variant = MixtureVariant::Anisotropic;
    spec.bases = vec![BasisKind::SteinMonomials { max_total_degree: 2 }];
    spec.stages = vec![20];
    spec.reps = 20;
    let result = Experiment::prepare(&spec).unwrap().run().unwrap();
    let (ais, cv, r) = ratio(&result, "aiscv[stein:q=2]", "x", 20000);
    report.record(
        "anisotropic mixture d=4 stein q=2 R=20, n=20000",
        r >= 100.0,
        format!(
            "MSE ais {ais:.2e}, aiscv {cv:.2e}, ratio {r:.1} (need >= 100), {}",
            secs(start.elapsed())
        ),
    );
}

fn regression_checks(report: &mut Report, label: &str, exp: Experiment) {
    let start = Instant::now();
    let result = exp.run().unwrap();
    let q2 = result.mse("aiscv[stein:q=2]", "sqnorm", 5000).unwrap();
    report.record(
        &format!("{label}: stein q=2 near-exact, n=5000 R=10"),
        q2 <= 1e-6,
        format!("relative MSE {q2:.2e} (need <= 1e-6), {}", secs(start.elapsed())),
    );
    let (ais, cv, r) = ratio(&result, "aiscv[stein:q=1]", "sqnorm", 5000);
    report.record(
        &format!("{label}: stein q=1 halves the AIS error, n=5000 R=10"),
        r >= 2.0,
        format!("relative MSE ais {ais:.2e}, aiscv {cv:.2e}, ratio {r:.2} (need >= 2)"),
    );
}

fn regression_spec() -> ExperimentSpec {
    let mut spec = ExperimentSpec::defaults(Family::Blr);
    spec.stages = vec![5];
    spec.reps = 10;
    spec
}

fn housing_path() -> Option<PathBuf> {
    if let Some(p) = std::env::var_os("AISCV_HOUSING_CSV") {
        return Some(PathBuf::from(p));
    }
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data");
    ["housing.csv", "housing.data"]
        .iter()
        .map(|f| root.join(f))
        .find(|p| p.exists())
}

fn housing(report: &mut Report) {
    let name = "housing regression (N=506, d=13)";
    let Some(path) = housing_path() else {
        report.record(
            name,
            false,
            "dataset not found; set AISCV_HOUSING_CSV or place data/housing.csv (or .data) in the workspace".into(),
        );
        return;
    };
    let mut spec = regression_spec();
    if path.extension().is_some_and(|e| e != "csv") {
        spec.delimiter = Delimiter::Whitespace;
        spec.header = false;
    }
    spec.target_col = ColumnRef::Last;
    spec.dataset = Some(path);
    match Experiment::prepare(&spec) {
        Ok(exp) if exp.target().dim() == 13 => regression_checks(report, "housing, standardized features", exp),
        Ok(exp) => report.record(name, false, format!("dataset has d = {}", exp.target().dim())),
        Err(e) => report.record(name, false, format!("could not load dataset: {e}")),
    }
}

// ---------------------------------------------------------------------------
// Zero-mean contracts

fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * z * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let step = p1 / dp;
            z -= step;
            if step.abs() < 1e-17 {
                break;
            }
        }
        nodes.push(0.5 * (1.0 - z));
        weights.push(1.0 / ((1.0 - z * z) * dp * dp));
    }
    (nodes, weights)
}

fn legendre_zero_mean() -> f64 {
    let d = 4;
    let (nodes, weights) = gauss_legendre(8);
    let q = nodes.len();
    let total = q.pow(d as u32);
    let mut points = DMatrix::zeros(total, d);
    let mut w = DVector::from_element(total, 1.0);
    for i in 0..total {
        let mut rest = i;
        for j in 0..d {
            points[(i, j)] = nodes[rest % q];
            w[i] *= weights[rest % q];
            rest /= q;
        }
    }
    let h = ControlBasis::legendre_pairs(d, 6)
        .unwrap()
        .evaluate(&points, None)
        .unwrap();
    h.tr_mul(&w).amax()
}

/// `E[X^k]` for `X ~ N(m, v)` by `M_k = m M_{k-1} + (k-1) v M_{k-2}`.
fn normal_moments(m: f64, v: f64, kmax: usize) -> Vec<f64> {
    let mut out = vec![1.0, m];
    for k in 2..=kmax {
        out.push(m * out[k - 1] + (k - 1) as f64 * v * out[k - 2]);
    }
    out.truncate(kmax + 1);
    out
}

/// The Stein column of `x^alpha` for the target `N(mean, diag var)` as a
/// list of `(coefficient, exponent)` monomials.
fn stein_polynomial(alpha: &[usize], mean: &[f64], var: &[f64]) -> Vec<(f64, Vec<usize>)> {
    let mut terms = Vec::new();
    for j in 0..alpha.len() {
        let a = alpha[j] as f64;
        if alpha[j] >= 2 {
            let mut e = alpha.to_vec();
            e[j] -= 2;
            terms.push((a * (a - 1.0), e));
        }
        if alpha[j] >= 1 {
            // a x^(alpha - e_j) * (-(x_j - m_j) / v_j)
            terms.push((-a / var[j], alpha.to_vec()));
            let mut e = alpha.to_vec();
            e[j] -= 1;
            terms.push((a * mean[j] / var[j], e));
        }
    }
    terms
}

fn stein_zero_mean() -> (f64, f64) {
    let mean = [0.3, -0.8, 1.2];
    let var = [0.5, 1.4, 0.9];
    let d = 3;
    let q = 3;
    let basis = ControlBasis::stein_monomials(d, q).unwrap();
    let moments: Vec<Vec<f64>> = (0..d).map(|j| normal_moments(mean[j], var[j], q + 1)).collect();
    let score = gaussian_score(mean.to_vec(), var.to_vec());

    let mut rng = RngStream::new(1008, 0);
    let probe = DMatrix::from_fn(50, d, |_, _| rng.random_range(-2.0..2.0));
    let h = basis.evaluate(&probe, Some(&score)).unwrap();

    let mut worst_mean: f64 = 0.0;
    let mut worst_eval: f64 = 0.0;
    for (col, alpha) in basis.degree_table().iter().enumerate() {
        let poly = stein_polynomial(alpha, &mean, &var);
        let expectation: f64 = poly
            .iter()
            .map(|(c, e)| c * e.iter().enumerate().map(|(j, &k)| moments[j][k]).product::<f64>())
            .sum();
        worst_mean = worst_mean.max(expectation.abs());
        for i in 0..probe.nrows() {
            let want: f64 = poly
                .iter()
                .map(|(c, e)| {
                    c * e
                        .iter()
                        .enumerate()
                        .map(|(j, &k)| probe[(i, j)].powi(k as i32))
                        .product::<f64>()
                })
                .sum();
            worst_eval = worst_eval.max((h[(i, col)] - want).abs() / want.abs().max(1.0));
        }
    }
    (worst_mean, worst_eval)
}

fn zero_mean(report: &mut Report) {
    let legendre = legendre_zero_mean();
    report.record(
        "legendre columns integrate to zero (gauss-legendre, d=4, k=6)",
        legendre <= 1e-14,
        format!("worst |mean| {legendre:.2e} (tol 1e-14)"),
    );
    let (mean, eval) = stein_zero_mean();
    report.record(
        "stein columns have zero gaussian expectation (d=3, q=3)",
        mean <= 1e-12 && eval <= 1e-12,
        format!("worst |expectation| {mean:.2e}, worst evaluation gap {eval:.2e} (tol 1e-12)"),
    );
}

fn main() {
    let mut report = Report { lines: Vec::new() };
    exactness(&mut report);
    oracle_agreement(&mut report);
    invariance(&mut report);
    weight_scaling(&mut report);
    let first = cube_experiment(&mut report);
    mixture_experiment(&mut report);
    housing(&mut report);
    zero_mean(&mut report);
    determinism(&mut report, &first);

    let failed = report.lines.iter().filter(|(ok, _)| !ok).count();
    println!("{} criteria checked, {failed} failed", report.lines.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
