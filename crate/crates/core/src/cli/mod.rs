//! Command-line driver: configuration, data ingestion, the evaluation
//! protocol and report files.

pub mod config;
pub mod experiment;
pub mod ingest;
pub mod report;

pub use config::{MethodSpec, RunConfig, Settings};
pub use experiment::{run_experiment, Report};
pub use ingest::{ingest_csv, Series};
pub use report::ReportRow;
