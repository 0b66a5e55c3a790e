//! Adaptive importance sampling with control variates (AISCV).
//!
//! Particles are drawn in stages from an adaptive Student-t policy, weighted
//! by `f / q`, and stored in a [`ParticleStore`]. The plain AIS estimate is
//! the self-normalized weighted mean; the AISCV estimate is the intercept of
//! a weighted least-squares regression of the integrand on zero-mean control
//! variates, which can be precomputed as an integrand-independent
//! [`QuadratureRule`].
//!
//! ```
//! use aiscv::prelude::*;
//! use nalgebra::{DMatrix, DVector};
//!
//! let target = uniform_cube_target(2);
//! let policy = StudentTPolicy::with_covariance(
//!     DVector::from_element(2, 0.5),
//!     DMatrix::identity(2, 2) * 0.1,
//!     8.0,
//! )
//! .unwrap();
//! let mut rng = RngStream::new(42, 0);
//! let points = policy.sample(2000, &mut rng);
//! let weights = DVector::from_fn(2000, |i, _| {
//!     let x: Vec<f64> = points.row(i).iter().copied().collect();
//!     (target.log_density(&x) - policy.log_density(&x)).exp()
//! });
//! let store = ParticleStore::from_parts(points, weights).unwrap();
//!
//! let basis = ControlBasis::legendre_pairs(2, 3).unwrap();
//! let h = basis.evaluate(store.points(), None).unwrap();
//! let rule = build_quadrature(&store, &h).unwrap();
//!
//! // A polynomial in the span of the controls is integrated exactly.
//! let g = DVector::from_fn(2000, |i, _| 0.3 + 2.0 * h[(i, 0)] - h[(i, 4)]);
//! assert!((rule.apply_vector(&g).unwrap() - 0.3).abs() < 1e-10);
//! ```

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod check;
pub mod control;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod linalg;
pub mod particles;
pub mod policy;
pub mod rng;
pub mod targets;

pub use error::{Error, Result};
pub use estimator::QuadratureRule;
pub use particles::ParticleStore;
pub use rng::RngStream;

pub mod prelude {
    pub use crate::control::{BasisKind, ControlBasis, FnScore, ScoreFunction};
    pub use crate::error::{Error, Result};
    pub use crate::estimator::{
        ais_estimate, aiscv_fit, build_quadrature, invariance_check, matrix_form_oracle, quadrature_apply,
        EstimateReport, Method, QuadratureRule,
    };
    pub use crate::linalg::{weighted_mean, wls_fit, WlsSolution};
    pub use crate::particles::ParticleStore;
    pub use crate::policy::{gmm_update, GmmAccumulator, MixturePolicy, Policy, SamplingPolicy, StudentTPolicy};
    pub use crate::rng::RngStream;
    pub use crate::targets::{
        blr_posterior, cube_integrands, gaussian_mixture_target, uniform_cube_target, BlrPosterior, GaussianPrior,
        Integrand, MixtureVariant, Target,
    };
}
