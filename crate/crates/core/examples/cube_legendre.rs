//! Uniform target on the cube with Legendre control variates.
//!
//! `cargo run --release --example cube_legendre -- [d] [reps]`

use aiscv::control::BasisKind;
use aiscv::harness::{run_experiment, ExperimentSpec, Family};

fn main() -> aiscv::Result<()> {
    let mut args = std::env::args().skip(1);
    let mut spec = ExperimentSpec::defaults(Family::Cube);
    spec.dim = args.next().map_or(Ok(4), |a| a.parse()).expect("d must be an integer");
    spec.reps = args
        .next()
        .map_or(Ok(10), |a| a.parse())
        .expect("reps must be an integer");
    spec.bases = vec![BasisKind::Empty, BasisKind::LegendrePairs { max_degree: 6 }];

    let result = run_experiment(&spec)?;
    println!(
        "d = {}, controls per basis {:?}",
        spec.dim, result.metadata.control_counts
    );
    println!("{:<8} {:<22} {:>8} {:>12}", "integrand", "method", "n", "mse");
    for e in &result.mse {
        println!("{:<8} {:<22} {:>8} {:>12.3e}", e.integrand, e.method, e.n, e.mse);
    }
    Ok(())
}
