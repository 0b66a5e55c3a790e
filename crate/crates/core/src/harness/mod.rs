//! Experiment orchestration: configuration, dataset ingestion, the staged
//! sampling loop, replication management and result persistence.

mod config;
mod ingest;
mod output;
mod run;

pub use config::{parse_config, CategoricalPolicy, ExperimentSpec, Family};
pub use ingest::{ingest_csv, ColumnRef, Dataset, Delimiter, IngestOptions};
pub use output::{emit_results, read_json, summary_path, write_rows_csv, write_summary_csv, OutputFormat};
pub use run::{
    run_experiment, run_replication, EstimateRow, Experiment, ExperimentResult, FailureRecord, Metadata, MseEntry,
    ReplicationOutcome,
};
