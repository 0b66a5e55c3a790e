use std::path::PathBuf;
use std::process::ExitCode;

use aiscv::check::run_checks;
use aiscv::harness::{emit_results, parse_config, write_summary_csv, Experiment, ExperimentSpec, OutputFormat};
use aiscv::Error;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "aiscv",
    version,
    about = "Adaptive importance sampling with control variates"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment (cube, mixture or blr) and report mean squared errors.
    Run {
        family: String,
        #[command(flatten)]
        spec: SpecArgs,
        /// Write per-replication rows here; a summary table goes next to it.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "csv")]
        format: String,
    },
    /// Quadrature-rule utilities.
    Quadrature {
        #[command(subcommand)]
        action: QuadratureCommand,
    },
    /// Run the built-in property and oracle checks on small instances.
    Check {
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum QuadratureCommand {
    /// Run one replication and write its quadrature rule as CSV.
    Export {
        family: String,
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long, default_value_t = 0)]
        replication: u64,
        /// Which of the configured bases to use.
        #[arg(long, default_value_t = 0)]
        basis_index: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Experiment settings; flags override values from `--config`.
#[derive(Args)]
struct SpecArgs {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    d: Option<usize>,
    /// Checkpoints as cumulative stage counts, e.g. 5,10,20.
    #[arg(long)]
    stages: Option<String>,
    #[arg(long)]
    per_stage: Option<usize>,
    #[arg(long)]
    reps: Option<usize>,
    /// Control-variate bases, e.g. legendre:k=6 or stein:q=1,stein:q=2.
    #[arg(long)]
    basis: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    target_col: Option<String>,
    /// Defensive mixture weight, or `off`.
    #[arg(long)]
    eta: Option<String>,
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    integrands: Option<String>,
    /// Any other configuration key, as key=value. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    extra: Vec<String>,
}

impl SpecArgs {
    fn resolve(&self, family: &str) -> Result<ExperimentSpec, Error> {
        let mut pairs = match &self.config {
            Some(path) => parse_config(&std::fs::read_to_string(path)?)?,
            None => Vec::new(),
        };
        pairs.push(("family".into(), family.into()));
        let mut flag = |key: &str, value: Option<String>| {
            if let Some(v) = value {
                pairs.push((key.to_string(), v));
            }
        };
        flag("d", self.d.map(|v| v.to_string()));
        flag("stages", self.stages.clone());
        flag("per_stage", self.per_stage.map(|v| v.to_string()));
        flag("reps", self.reps.map(|v| v.to_string()));
        flag("basis", self.basis.clone());
        flag("seed", self.seed.map(|v| v.to_string()));
        flag("dataset", self.dataset.as_ref().map(|p| p.display().to_string()));
        flag("target_col", self.target_col.clone());
        flag("eta", self.eta.clone());
        flag("variant", self.variant.clone());
        flag("integrands", self.integrands.clone());
        for kv in &self.extra {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        ExperimentSpec::from_pairs(None, &pairs)
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_)
        | Error::Parse { .. }
        | Error::EmptyDataset(_)
        | Error::InvalidParameter(_)
        | Error::Csv(_)
        | Error::Json(_) => 2,
        Error::TooManyFailures { .. }
        | Error::DegenerateQuadrature { .. }
        | Error::ZeroWeightSum
        | Error::NotPositiveDefinite
        | Error::SingularPrior => 3,
        Error::DimensionMismatch(_) | Error::Io(_) => 1,
    }
}

fn execute(cli: Cli) -> Result<bool, Error> {
    match cli.command {
        Command::Run {
            family,
            spec,
            out,
            format,
        } => {
            let format: OutputFormat = format.parse()?;
            let spec = spec.resolve(&family)?;
            let result = Experiment::prepare(&spec)?.run()?;
            if let Some(path) = out {
                let summary = emit_results(&result, format, &path)?;
                eprintln!("wrote {} and {}", path.display(), summary.display());
            }
            write_summary_csv(&result, std::io::stdout().lock())?;
            eprintln!(
                "{} replications ({} failed) in {:.1}s",
                result.metadata.replications, result.metadata.failed, result.metadata.wall_time_secs
            );
            Ok(true)
        }
        Command::Quadrature {
            action:
                QuadratureCommand::Export {
                    family,
                    spec,
                    replication,
                    basis_index,
                    out,
                },
        } => {
            let spec = spec.resolve(&family)?;
            let rule = Experiment::prepare(&spec)?.quadrature_rule(replication, basis_index)?;
            rule.save_csv(&out)?;
            eprintln!(
                "wrote {} points to {} (weight mass used {:.6e}, rank {})",
                rule.len(),
                out.display(),
                rule.weight_sum_used(),
                rule.rank()
            );
            Ok(true)
        }
        Command::Check { seed } => {
            let mut all = true;
            for c in run_checks(seed) {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                all &= c.passed;
            }
            Ok(all)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
