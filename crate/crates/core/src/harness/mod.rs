//! Configuration-driven sweeps over `(n, p)` and their reports.

pub mod config;
pub mod report;
pub mod run;
pub mod tools;

pub use config::{Check, ExperimentConfig, OutputFormat, OutputSpec};
pub use report::{emit_report, read_json_report, records_from_csv, records_to_csv, JsonReport};
pub use run::{fit_constant, run_experiment, AggregateReport, CheckStatus, ExperimentResult, Fit, TrialRecord};
pub use tools::{evaluate_oracle, parse_matrix, spectra_report, SpectraReport};

/// Environment variable naming the directory for relative output paths.
pub const OUTPUT_DIR_ENV: &str = "NOISYKERNEL_OUTPUT_DIR";
