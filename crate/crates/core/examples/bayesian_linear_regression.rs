//! Posterior second moment of a Bayesian linear regression.
//!
//! `cargo run --release --example bayesian_linear_regression -- [data.csv]`
//! reads a CSV with a header and the response in the last column
//! (default: `data/housing.csv`).

use std::path::PathBuf;

use aiscv::harness::{Experiment, ExperimentSpec, Family};

fn main() -> aiscv::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/housing.csv"));
    let mut spec = ExperimentSpec::defaults(Family::Blr);
    spec.dataset = Some(path.clone());
    spec.reps = 10;

    let exp = Experiment::prepare(&spec)?;
    println!(
        "{}: d = {}, methods {:?}",
        path.display(),
        exp.target().dim(),
        exp.methods()
    );
    let result = exp.run()?;
    for e in &result.mse {
        println!("{:<18} n = {:>6}  relative mse {:.3e}", e.method, e.n, e.mse);
    }
    Ok(())
}
