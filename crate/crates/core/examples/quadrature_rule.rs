//! Builds a quadrature rule from a weighted sample and applies it to
//! several integrands at once.

use aiscv::prelude::*;
use nalgebra::{DMatrix, DVector};

fn main() -> Result<()> {
    let d = 2;
    let n = 4000;
    let target = uniform_cube_target(d);
    let policy = StudentTPolicy::with_covariance(DVector::from_element(d, 0.5), DMatrix::identity(d, d) * 0.1, 8.0)?;
    let mut rng = RngStream::new(7, 0);
    let points = policy.sample(n, &mut rng);
    let weights = DVector::from_fn(n, |i, _| {
        let x: Vec<f64> = points.row(i).iter().copied().collect();
        (target.log_density(&x) - policy.log_density(&x)).exp()
    });
    let store = ParticleStore::from_parts(points, weights)?;
    println!(
        "{n} particles, effective sample size {:.0}",
        store.effective_sample_size()
    );

    let basis = ControlBasis::legendre_pairs(d, 4)?;
    let h = basis.evaluate(store.points(), None)?;
    let rule = build_quadrature(&store, &h)?;
    println!(
        "{} controls, rank {}, weights sum to {:.15}",
        basis.len(),
        rule.rank(),
        rule.quad_weights().sum()
    );

    // One rule, many integrands: each column is integrated by a dot product.
    let integrands = cube_integrands(d);
    let values = DMatrix::from_fn(n, integrands.len(), |i, j| {
        let x: Vec<f64> = store.points().row(i).iter().copied().collect();
        integrands[j].evaluate(&DMatrix::from_row_slice(1, d, &x))[(0, 0)]
    });
    let cv = rule.apply(&values)?;
    for (j, g) in integrands.iter().enumerate() {
        let ais = ais_estimate(&store, &values.column(j).into_owned())?.value;
        println!("{}: ais {ais:.6}  aiscv {:.6}  truth {}", g.name(), cv[j], g.truth()[0]);
    }

    // The regression route gives the same number.
    let fit = aiscv_fit(&store, &h, &values.column(0).into_owned())?;
    println!("g1 via regression intercept: {:.6}", fit.value);
    Ok(())
}
