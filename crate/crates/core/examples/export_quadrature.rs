//! Exports the quadrature rule of one replication to CSV, reads it back and
//! reuses it for a new integrand.

use std::fs::File;

use aiscv::harness::{Experiment, ExperimentSpec, Family};
use aiscv::QuadratureRule;
use nalgebra::DVector;

fn main() -> aiscv::Result<()> {
    let mut spec = ExperimentSpec::defaults(Family::Mixture);
    spec.dim = 2;
    spec.stages = vec![5];
    let rule = Experiment::prepare(&spec)?.quadrature_rule(0, 0)?;

    let dir = std::env::temp_dir().join("aiscv-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("rule.csv");
    rule.save_csv(&path)?;
    let back = QuadratureRule::read_csv(File::open(&path)?)?;
    println!("wrote {} points to {}", back.len(), path.display());

    // Second moment of the first coordinate, computed from the file alone.
    let sq = DVector::from_fn(back.len(), |i, _| back.points()[(i, 0)].powi(2));
    println!("E[x1^2] ~ {:.6}", back.apply_vector(&sq)?);
    Ok(())
}
