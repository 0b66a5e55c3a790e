//! A hand-written adaptive loop: Student-t policy, weighted mean update,
//! and the estimates after every stage.

use aiscv::prelude::*;
use nalgebra::{DMatrix, DVector};

fn main() -> Result<()> {
    let d = 2;
    let target = gaussian_mixture_target(d, MixtureVariant::Isotropic);
    let truth = target.mean();
    let score = target.score_function().expect("the mixture has a score");
    let basis = ControlBasis::stein_monomials(d, 2)?;

    let mut policy =
        StudentTPolicy::with_covariance(DVector::from_vec(vec![1.0, -1.0]), DMatrix::identity(d, d) * 2.5, 8.0)?;
    let mut store = ParticleStore::new(d);
    let mut acc = GmmAccumulator::new(d);
    let mut rng = RngStream::new(11, 0);

    for stage in 1..=8 {
        let points = policy.sample(500, &mut rng);
        let weights = DVector::from_fn(points.nrows(), |i, _| {
            let x: Vec<f64> = points.row(i).iter().copied().collect();
            (target.log_density(&x) - policy.log_density(&x)).exp()
        });
        let mean = gmm_update(&mut acc, &points, &weights)?;
        store.push_stage(points, weights)?;
        policy = policy.with_mean(mean)?;

        let h = basis.evaluate(store.points(), Some(score))?;
        let rule = build_quadrature(&store, &h)?;
        let x0 = store.points().column(0).into_owned();
        let ais = ais_estimate(&store, &x0)?.value;
        let cv = rule.apply_vector(&x0)?;
        println!(
            "stage {stage}: n = {:>4}, policy mean ({:+.3}, {:+.3}), x1 ais {:+.5} aiscv {:+.5} truth {:+.5}",
            store.len(),
            policy.mean()[0],
            policy.mean()[1],
            ais,
            cv,
            truth[0]
        );
    }
    Ok(())
}
