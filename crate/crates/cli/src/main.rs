use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use noisykernel::harness::{
    emit_report, evaluate_oracle, run_experiment, spectra_report, CheckStatus, ExperimentConfig, OUTPUT_DIR_ENV,
};
use noisykernel::kernels::KernelSpec;
use noisykernel::{DataSet, Error};

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_PROPERTY: u8 = 3;

#[derive(Parser)]
#[command(name = "noisykernel", version, about = "Noisy kernel random matrix experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its report.
    Run {
        config: PathBuf,
        /// Directory for relative output paths; overrides the environment.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Validate a config without running it.
    Check { config: PathBuf },
    /// Evaluate one closed-form oracle, e.g. `oracle pairdiff sigma=identity:10 mu4=3`.
    Oracle {
        name: String,
        /// `key=value` parameters.
        params: Vec<String>,
    },
    /// Compare a stored dataset's kernel matrix with its approximant.
    Spectra {
        dataset: PathBuf,
        /// Kernel as JSON; the Gaussian kernel with s = 1 when absent.
        #[arg(long)]
        kernel: Option<String>,
        /// Comma-separated subspace sizes.
        #[arg(long, value_delimiter = ',', default_value = "1")]
        ks: Vec<usize>,
    },
}

enum Failure {
    Lib(Error),
    Property(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn status_word(s: CheckStatus) -> &'static str {
    match s {
        CheckStatus::Pass => "PASS",
        CheckStatus::Flag => "FLAG",
        CheckStatus::Fail => "FAIL",
        CheckStatus::Skipped => "SKIP",
    }
}

fn output_base(flag: Option<PathBuf>) -> Option<PathBuf> {
    flag.or_else(|| std::env::var_os(OUTPUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
}

fn run(config: &Path, output_dir: Option<PathBuf>) -> Result<(), Failure> {
    let cfg = ExperimentConfig::from_path(config)?;
    let result = run_experiment(&cfg)?;
    let path = cfg.output.resolve(output_base(output_dir).as_deref());
    let written = emit_report(&result.records, &result.aggregate, cfg.output.format, &path)?;
    let agg = &result.aggregate;
    println!("{}: {} trials", agg.name, result.records.len());
    for c in &agg.checks {
        println!("{} {}: {}", status_word(c.status), c.check.name(), c.detail);
    }
    match (&agg.fit, &agg.fit_note) {
        (Some(f), _) => println!("fit: C_hat = {:e}, r^2 = {:.4}", f.c_hat, f.r_squared),
        (None, Some(note)) => println!("fit: none ({note})"),
        (None, None) => {}
    }
    for w in written {
        println!("wrote {}", w.display());
    }
    let failed: Vec<&str> = agg.failures().iter().map(|c| c.check.name()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Property(format!("failed checks: {}", failed.join(", "))))
    }
}

fn check(config: &Path) -> Result<(), Failure> {
    let cfg = ExperimentConfig::from_path(config)?;
    let trials = cfg.grid.len() * cfg.replications;
    println!("{}: ok ({} grid points, {trials} trials)", cfg.name, cfg.grid.len());
    Ok(())
}

fn spectra(dataset: &Path, kernel: Option<&str>, ks: &[usize]) -> Result<(), Failure> {
    let text = std::fs::read_to_string(dataset)
        .map_err(|e| Error::Io(format!("cannot read {}: {e}", dataset.display())))?;
    let ds: DataSet = serde_json::from_str(&text).map_err(|e| Error::Config {
        field: "<dataset>".into(),
        reason: e.to_string(),
    })?;
    let kernel = match kernel {
        Some(k) => serde_json::from_str::<KernelSpec>(k).map_err(|e| Error::Config {
            field: "--kernel".into(),
            reason: e.to_string(),
        })?,
        None => KernelSpec::gaussian(1.0),
    };
    kernel.validate().map_err(|e| Error::Config {
        field: "--kernel".into(),
        reason: e.to_string(),
    })?;
    let report = spectra_report(&ds, &kernel, ks)?;
    println!("{}", noisykernel::harness::report::to_exact_json(&report)?);
    if report.report.weyl_ok {
        Ok(())
    } else {
        Err(Failure::Property("Weyl inequality violated".into()))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { config, output_dir } => run(&config, output_dir),
        Command::Check { config } => check(&config),
        Command::Oracle { name, params } => evaluate_oracle(&name, &params).map(|v| println!("{v}")).map_err(Failure::from),
        Command::Spectra { dataset, kernel, ks } => spectra(&dataset, kernel.as_deref(), &ks),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { EXIT_CONFIG } else { EXIT_RUNTIME })
        }
        Err(Failure::Property(msg)) => {
            eprintln!("property violation: {msg}");
            ExitCode::from(EXIT_PROPERTY)
        }
    }
}
