use std::collections::HashMap;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentSpec, Family};
use super::ingest::{ingest_csv, IngestOptions};
use crate::control::{BasisKind, ControlBasis};
use crate::error::{Error, Result};
use crate::estimator::{build_quadrature, QuadratureRule};
use crate::particles::ParticleStore;
use crate::policy::{GmmAccumulator, MixturePolicy, Policy, SamplingPolicy, StudentTPolicy};
use crate::rng::RngStream;
use crate::targets::{
    blr_posterior, cube_integrands, gaussian_mixture_target, identity_integrand, uniform_cube_target, ErrorScale,
    GaussianPrior, Integrand, Target,
};

/// Version recorded in every result file.
pub const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "+", env!("AISCV_GIT_DESCRIBE"));

/// Stream id reserved for drawing the planted integrand's coefficients.
const PLANTED_STREAM: u64 = u64::MAX;

/// One estimate of one integrand by one method at one checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub replication: usize,
    pub method: String,
    pub integrand: String,
    /// Number of stages completed at this checkpoint.
    pub stages: usize,
    pub n: usize,
    pub estimate: Vec<f64>,
    /// Signed (scalar) or Euclidean (vector) error; relative for relative-scale integrands.
    pub error: f64,
    pub squared_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub replication: usize,
    pub stages: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReplicationOutcome {
    Completed(Vec<EstimateRow>),
    Failed(FailureRecord),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseEntry {
    pub method: String,
    pub integrand: String,
    pub stages: usize,
    pub n: usize,
    pub mse: f64,
    /// Replications contributing to the mean.
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub version: String,
    pub target: String,
    pub dim: usize,
    pub methods: Vec<String>,
    pub integrands: Vec<String>,
    pub control_counts: Vec<usize>,
    pub replications: usize,
    pub failed: usize,
    pub failures: Vec<FailureRecord>,
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub spec: ExperimentSpec,
    pub metadata: Metadata,
    pub rows: Vec<EstimateRow>,
    pub mse: Vec<MseEntry>,
}

impl ExperimentResult {
    pub fn mse(&self, method: &str, integrand: &str, n: usize) -> Option<f64> {
        self.mse
            .iter()
            .find(|e| e.method == method && e.integrand == integrand && e.n == n)
            .map(|e| e.mse)
    }
}

/// Method label for the quadrature built on `kind`.
pub fn method_label(kind: &BasisKind) -> String {
    format!("aiscv[{}]", kind.label())
}

/// A prepared experiment: target, integrands, control bases and the
/// initial policy, shared by all replications.
pub struct Experiment {
    spec: ExperimentSpec,
    target: Arc<dyn Target>,
    integrands: Vec<Integrand>,
    bases: Vec<ControlBasis>,
    initial: SamplingPolicy,
}

impl std::fmt::Debug for Experiment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Experiment")
            .field("spec", &self.spec)
            .field("target", &self.target.label())
            .field("integrands", &self.integrands)
            .finish()
    }
}

/// Centres each column and divides it by its sample standard deviation.
fn standardize_columns(mut x: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::Config("standardizing needs at least two rows".into()));
    }
    for (j, mut col) in x.column_iter_mut().enumerate() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
        let sd = (col.norm_squared() / (n - 1) as f64).sqrt();
        if !(sd > 0.0) {
            return Err(Error::Config(format!(
                "feature column {} is constant; drop it or set standardize = false",
                j + 1
            )));
        }
        col /= sd;
    }
    Ok(x)
}

impl Experiment {
    /// Builds the experiment described by `spec`, reading the dataset for
    /// the regression family.
    pub fn prepare(spec: &ExperimentSpec) -> Result<Self> {
        spec.validate()?;
        match spec.family {
            Family::Cube => {
                let d = spec.dim;
                let target = Arc::new(uniform_cube_target(d));
                Self::assemble(
                    spec,
                    target,
                    cube_integrands(d),
                    DVector::from_element(d, 0.5),
                    DMatrix::identity(d, d) * 0.1,
                )
            }
            Family::Mixture => {
                let d = spec.dim;
                let target = gaussian_mixture_target(d, spec.variant);
                let truth = target.mean();
                let mut mean = DVector::zeros(d);
                mean[0] = 1.0;
                if d > 1 {
                    mean[1] = -1.0;
                }
                mean /= (d as f64).sqrt();
                let cov = DMatrix::identity(d, d) * (5.0 / d as f64);
                let integrands = vec![identity_integrand(truth.as_slice().to_vec())];
                Self::assemble(spec, Arc::new(target), integrands, mean, cov)
            }
            Family::Blr => {
                let path = spec
                    .dataset
                    .as_ref()
                    .ok_or_else(|| Error::Config("the blr family needs a dataset path".into()))?;
                let options = IngestOptions {
                    target: spec.target_col.clone(),
                    delimiter: spec.delimiter,
                    header: spec.header,
                    categorical: spec.categorical.clone(),
                    categorical_policy: spec.categorical_policy,
                };
                let data = ingest_csv(path, &options)?;
                Self::with_regression_data(spec, data.x, data.y)
            }
        }
    }

    /// Regression experiment on in-memory data; the dataset path in `spec`
    /// is ignored. Features are standardized first when `spec.standardize`
    /// is set.
    pub fn with_regression_data(spec: &ExperimentSpec, x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        spec.validate()?;
        if spec.family != Family::Blr {
            return Err(Error::Config("regression data given to a non-blr experiment".into()));
        }
        let d = x.ncols();
        let x = if spec.standardize { standardize_columns(x)? } else { x };
        let prior = GaussianPrior::isotropic(d, spec.prior_var);
        let target = blr_posterior(x, y, spec.sigma, prior)?;
        let integrands = vec![target.squared_norm_integrand()];
        let cov = target.posterior_cov().clone();
        Self::assemble(spec, Arc::new(target), integrands, DVector::zeros(d), cov)
    }

    /// Experiment on a caller-supplied target. `initial_mean` and
    /// `initial_cov` set the first policy unless the spec overrides them;
    /// `integrands` are used when the spec does not name any.
    pub fn custom(
        spec: &ExperimentSpec,
        target: Arc<dyn Target>,
        integrands: Vec<Integrand>,
        initial_mean: DVector<f64>,
        initial_cov: DMatrix<f64>,
    ) -> Result<Self> {
        spec.validate()?;
        if initial_mean.len() != target.dim() || initial_cov.shape() != (target.dim(), target.dim()) {
            return Err(Error::dims("initial policy does not match the target dimension"));
        }
        Self::assemble(spec, target, integrands, initial_mean, initial_cov)
    }

    fn assemble(
        spec: &ExperimentSpec,
        target: Arc<dyn Target>,
        family_integrands: Vec<Integrand>,
        default_mean: DVector<f64>,
        default_cov: DMatrix<f64>,
    ) -> Result<Self> {
        let d = target.dim();
        let mean = match &spec.initial_mean {
            Some(m) if m.len() == d => DVector::from_column_slice(m),
            Some(m) => {
                return Err(Error::Config(format!(
                    "initial_mean has {} entries, target has d = {d}",
                    m.len()
                )));
            }
            None => default_mean,
        };
        let cov = match spec.sigma0 {
            Some(s) => DMatrix::identity(d, d) * s,
            None => default_cov,
        };
        let q0 = StudentTPolicy::with_covariance(mean, cov, spec.dof)?;
        let initial = match spec.eta {
            Some(eta) => SamplingPolicy::Defensive(MixturePolicy::new(q0.clone(), q0, eta)?),
            None => SamplingPolicy::StudentT(q0),
        };

        let mut bases = Vec::with_capacity(spec.bases.len());
        for kind in &spec.bases {
            if kind.needs_score() && target.score_function().is_none() {
                return Err(Error::Config(format!(
                    "basis {} needs a score function, which target {} does not provide",
                    kind.label(),
                    target.label()
                )));
            }
            bases.push(ControlBasis::from_kind(*kind, d)?);
        }

        let integrands = if spec.integrands.is_empty() {
            family_integrands
        } else {
            let mut chosen = Vec::new();
            for name in &spec.integrands {
                if name == "planted" {
                    chosen.push(planted_integrand(spec.base_seed, &target, &bases)?);
                } else {
                    let found = family_integrands.iter().find(|g| g.name() == name).ok_or_else(|| {
                        let known: Vec<&str> = family_integrands.iter().map(|g| g.name()).collect();
                        Error::Config(format!(
                            "unknown integrand `{name}`; available: {}, planted",
                            known.join(", ")
                        ))
                    })?;
                    chosen.push(found.clone());
                }
            }
            chosen
        };

        Ok(Self {
            spec: spec.clone(),
            target,
            integrands,
            bases,
            initial,
        })
    }

    pub fn spec(&self) -> &ExperimentSpec {
        &self.spec
    }

    pub fn target(&self) -> &dyn Target {
        self.target.as_ref()
    }

    pub fn integrands(&self) -> &[Integrand] {
        &self.integrands
    }

    pub fn bases(&self) -> &[ControlBasis] {
        &self.bases
    }

    pub fn initial_policy(&self) -> &SamplingPolicy {
        &self.initial
    }

    pub fn methods(&self) -> Vec<String> {
        std::iter::once("ais".to_string())
            .chain(self.bases.iter().map(|b| method_label(&b.kind())))
            .collect()
    }

    /// Runs the staged sampling loop for one replication and returns every
    /// checkpoint's estimates.
    pub fn run_replication(&self, stream_id: u64) -> Result<ReplicationOutcome> {
        self.simulate(stream_id).map(|(_, outcome)| outcome)
    }

    /// Like [`Experiment::run_replication`] but also hands back the final
    /// particle store.
    pub fn simulate(&self, stream_id: u64) -> Result<(ParticleStore, ReplicationOutcome)> {
        let spec = &self.spec;
        let d = self.target.dim();
        let replication = stream_id as usize;
        let mut rng = RngStream::new(spec.base_seed, stream_id);
        let mut policy = self.initial.clone();
        let mut store = ParticleStore::new(d);
        let mut acc = GmmAccumulator::new(d);
        let mut h_all: Vec<DMatrix<f64>> = self.bases.iter().map(|b| DMatrix::zeros(0, b.len())).collect();
        let mut g_all: Vec<DMatrix<f64>> = self.integrands.iter().map(|g| DMatrix::zeros(0, g.width())).collect();
        let mut offset: Option<f64> = None;
        let mut rows = Vec::new();
        let score = self.target.score_function();

        for stage in 1..=spec.total_stages() {
            let points = policy.sample(spec.per_stage, &mut rng);
            let log_w: Vec<f64> = points
                .row_iter()
                .map(|row| {
                    let x: Vec<f64> = row.iter().copied().collect();
                    let lf = self.target.log_density(&x);
                    if lf == f64::NEG_INFINITY {
                        lf
                    } else {
                        lf - policy.log_density(&x)
                    }
                })
                .collect();
            // Target densities may be unnormalized by a huge factor; one
            // constant shift, fixed at the first stage, keeps exp() in range
            // without changing any self-normalized quantity.
            if offset.is_none() {
                offset = log_w.iter().copied().filter(|v| v.is_finite()).reduce(f64::max);
            }
            let shift = offset.unwrap_or(0.0);
            let weights = DVector::from_iterator(log_w.len(), log_w.iter().map(|lw| (lw - shift).exp()));
            if weights.iter().any(|w| !w.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "importance weight overflow at stage {stage}; the policy misses the target's mass"
                )));
            }

            for (basis, h) in self.bases.iter().zip(h_all.iter_mut()) {
                append_rows(h, &basis.evaluate(&points, score)?);
            }
            for (g, block) in self.integrands.iter().zip(g_all.iter_mut()) {
                append_rows(block, &g.evaluate(&points));
            }
            acc.fold(&points, &weights)?;
            store.push_stage(points, weights)?;
            if let Ok(mean) = acc.mean() {
                policy = policy.with_mean(mean)?;
            }

            if spec.stages.contains(&stage) {
                match self.checkpoint(replication, stage, &store, &h_all, &g_all) {
                    Ok(mut r) => rows.append(&mut r),
                    Err(e @ (Error::DegenerateQuadrature { .. } | Error::ZeroWeightSum)) => {
                        let failure = FailureRecord {
                            replication,
                            stages: stage,
                            reason: e.to_string(),
                        };
                        return Ok((store, ReplicationOutcome::Failed(failure)));
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        Ok((store, ReplicationOutcome::Completed(rows)))
    }

    /// Runs one replication and builds the quadrature rule for basis
    /// `basis_index` from all of its particles.
    pub fn quadrature_rule(&self, stream_id: u64, basis_index: usize) -> Result<QuadratureRule> {
        let basis = self.bases.get(basis_index).ok_or_else(|| {
            Error::Config(format!(
                "basis index {basis_index} out of range ({} bases)",
                self.bases.len()
            ))
        })?;
        let (store, _) = self.simulate(stream_id)?;
        let h = basis.evaluate(store.points(), self.target.score_function())?;
        build_quadrature(&store, &h)
    }

    fn checkpoint(
        &self,
        replication: usize,
        stages: usize,
        store: &ParticleStore,
        h_all: &[DMatrix<f64>],
        g_all: &[DMatrix<f64>],
    ) -> Result<Vec<EstimateRow>> {
        let n = store.len();
        let w = store.weights();
        let w_sum = w.sum();
        if !(w_sum > 0.0) {
            return Err(Error::ZeroWeightSum);
        }
        let mut rows = Vec::new();
        let mut push = |method: String, g: &Integrand, estimate: Vec<f64>| {
            let error = g.error(&estimate);
            rows.push(EstimateRow {
                replication,
                method,
                integrand: g.name().to_string(),
                stages,
                n,
                estimate,
                error,
                squared_error: error * error,
            });
        };
        for (g, values) in self.integrands.iter().zip(g_all) {
            let est = values.tr_mul(w) / w_sum;
            push("ais".into(), g, est.as_slice().to_vec());
        }
        for (basis, h) in self.bases.iter().zip(h_all) {
            let rule = build_quadrature(store, h)?;
            for (g, values) in self.integrands.iter().zip(g_all) {
                let est = rule.apply(values)?;
                push(method_label(&basis.kind()), g, est.as_slice().to_vec());
            }
        }
        Ok(rows)
    }

    /// Runs all replications (in parallel, aggregated in stream order) and
    /// averages squared errors per method, integrand and checkpoint.
    pub fn run(&self) -> Result<ExperimentResult> {
        let start = Instant::now();
        let reps = self.spec.reps;
        let outcomes: Vec<Result<ReplicationOutcome>> = (0..reps as u64)
            .into_par_iter()
            .map(|id| self.run_replication(id))
            .collect();

        let mut rows = Vec::new();
        let mut failures = Vec::new();
        for outcome in outcomes {
            match outcome? {
                ReplicationOutcome::Completed(mut r) => rows.append(&mut r),
                ReplicationOutcome::Failed(f) => failures.push(f),
            }
        }
        if failures.len() * 10 > reps {
            return Err(Error::TooManyFailures {
                failed: failures.len(),
                total: reps,
            });
        }

        let mse = aggregate(&rows, &self.methods(), &self.integrands, &self.spec);
        let metadata = Metadata {
            version: VERSION.to_string(),
            target: self.target.label(),
            dim: self.target.dim(),
            methods: self.methods(),
            integrands: self.integrands.iter().map(|g| g.name().to_string()).collect(),
            control_counts: self.bases.iter().map(ControlBasis::len).collect(),
            replications: reps,
            failed: failures.len(),
            failures,
            wall_time_secs: start.elapsed().as_secs_f64(),
        };
        Ok(ExperimentResult {
            spec: self.spec.clone(),
            metadata,
            rows,
            mse,
        })
    }
}

fn aggregate(
    rows: &[EstimateRow],
    methods: &[String],
    integrands: &[Integrand],
    spec: &ExperimentSpec,
) -> Vec<MseEntry> {
    let mut sums: HashMap<(&str, &str, usize), (f64, usize)> = HashMap::new();
    for r in rows {
        let e = sums.entry((&r.method, &r.integrand, r.stages)).or_insert((0.0, 0));
        e.0 += r.squared_error;
        e.1 += 1;
    }
    let mut out = Vec::new();
    for method in methods {
        for g in integrands {
            for &stages in &spec.stages {
                let (sum, count) = sums
                    .get(&(method.as_str(), g.name(), stages))
                    .copied()
                    .unwrap_or((0.0, 0));
                out.push(MseEntry {
                    method: method.clone(),
                    integrand: g.name().to_string(),
                    stages,
                    n: stages * spec.per_stage,
                    mse: if count > 0 { sum / count as f64 } else { f64::NAN },
                    count,
                });
            }
        }
    }
    out
}

fn append_rows(all: &mut DMatrix<f64>, block: &DMatrix<f64>) {
    let old = all.nrows();
    let cols = all.ncols();
    let grown = std::mem::replace(all, DMatrix::zeros(0, cols)).resize_vertically(old + block.nrows(), 0.0);
    *all = grown;
    all.rows_mut(old, block.nrows()).copy_from(block);
}

/// `g = alpha + beta' h` for the first nonempty basis, with coefficients
/// drawn from a stream reserved for this purpose. Its integral is `alpha`.
fn planted_integrand(seed: u64, target: &Arc<dyn Target>, bases: &[ControlBasis]) -> Result<Integrand> {
    let basis = bases
        .iter()
        .find(|b| !b.is_empty())
        .cloned()
        .ok_or_else(|| Error::Config("the planted integrand needs a nonempty control basis".into()))?;
    let mut rng = RngStream::new(seed, PLANTED_STREAM);
    let alpha: f64 = rng.random_range(-2.0..2.0);
    let beta: Vec<f64> = (0..basis.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let target = Arc::clone(target);
    Ok(Integrand::new(
        "planted",
        vec![alpha],
        ErrorScale::Absolute,
        move |x, out| {
            let point = DMatrix::from_row_slice(1, x.len(), x);
            let h = basis
                .evaluate(&point, target.score_function())
                .expect("basis was checked against the target");
            out[0] = alpha + h.row(0).iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>();
        },
    ))
}

/// Prepares `spec` and runs a single replication.
pub fn run_replication(spec: &ExperimentSpec, stream_id: u64) -> Result<ReplicationOutcome> {
    Experiment::prepare(spec)?.run_replication(stream_id)
}

/// Prepares `spec` and runs all of its replications.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    Experiment::prepare(spec)?.run()
}
