use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::run::ExperimentResult;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::Config(format!("unknown output format `{other}` (csv, json)"))),
        }
    }
}

/// `results.csv` -> `results.summary.csv`.
pub fn summary_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("results");
    path.with_file_name(format!("{stem}.summary.csv"))
}

/// One row per (replication, method, integrand, checkpoint). Vector
/// estimates are joined with `;`. No timing data, so reruns are
/// byte-identical.
pub fn write_rows_csv<W: Write>(result: &ExperimentResult, writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record([
        "replication",
        "method",
        "integrand",
        "stages",
        "n",
        "estimate",
        "error",
        "squared_error",
    ])?;
    for r in &result.rows {
        let estimate: Vec<String> = r.estimate.iter().map(f64::to_string).collect();
        out.write_record([
            r.replication.to_string(),
            r.method.clone(),
            r.integrand.clone(),
            r.stages.to_string(),
            r.n.to_string(),
            estimate.join(";"),
            r.error.to_string(),
            r.squared_error.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Method x sample size table of mean squared errors, one block of rows per
/// integrand.
pub fn write_summary_csv<W: Write>(result: &ExperimentResult, writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    let sizes: Vec<usize> = result.spec.stages.iter().map(|s| s * result.spec.per_stage).collect();
    let mut header = vec!["integrand".to_string(), "method".to_string()];
    header.extend(sizes.iter().map(|n| format!("n={n}")));
    out.write_record(&header)?;
    for integrand in &result.metadata.integrands {
        for method in &result.metadata.methods {
            let mut row = vec![integrand.clone(), method.clone()];
            for &n in &sizes {
                row.push(
                    result
                        .mse(method, integrand, n)
                        .map_or_else(String::new, |v| v.to_string()),
                );
            }
            out.write_record(&row)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Writes `result` to `path` in `format` and the summary table next to it.
/// Returns the summary path.
pub fn emit_results(result: &ExperimentResult, format: OutputFormat, path: impl AsRef<Path>) -> Result<PathBuf> {
    let path = path.as_ref();
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    match format {
        OutputFormat::Csv => write_rows_csv(result, file)?,
        OutputFormat::Json => {
            let mut file = file;
            serde_json::to_writer_pretty(&mut file, result)?;
            file.flush()?;
        }
    }
    let summary = summary_path(path);
    write_summary_csv(result, std::io::BufWriter::new(std::fs::File::create(&summary)?))?;
    Ok(summary)
}

pub fn read_json(path: impl AsRef<Path>) -> Result<ExperimentResult> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    Ok(serde_json::from_reader(file)?)
}
