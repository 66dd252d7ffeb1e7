//! Batch command-line front end. [`run`] parses arguments and dispatches
//! to the workflows in [`commands`]; results go to CSV and JSON files,
//! written atomically.
//!
//! Exit codes: 0 success, 2 invalid input, 3 numerical failure, 4 I/O error.

mod commands;
mod dataset;
mod output;
mod specfile;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use commands::{
    block_columns, cmd_fit, cmd_moments, cmd_simulate, cmd_testdep, fit_report, format_moment_table,
    moment_table, replicate_path, BlockReport, DataReport, FitReport, ModelReport, MomentReport, MomentRow,
    ParameterReport, TestDepReport, TestParameter,
};
pub use dataset::{ingest, write_dataset, Dataset, IngestOptions};
pub use output::write_atomic;
pub use specfile::{parse_spec, read_spec_file, SpecFile};

use crate::error::Error;
use crate::estimator::{DepTestOptions, FitOptions, Weighting};
use crate::models::ParamVector;
use crate::moments::Bandwidth;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_IO: i32 = 4;

/// Exit code for an error.
pub fn exit_code(error: &Error) -> i32 {
    match error {
        Error::Io(_) => EXIT_IO,
        Error::Csv(e) if e.is_io_error() => EXIT_IO,
        Error::NonConvergence(_) | Error::Singular(_) => EXIT_NUMERICAL,
        _ => EXIT_INVALID,
    }
}

#[derive(Debug, Parser)]
#[command(name = "wavecal", version, about = "Latent error models for multichannel inertial sensor data, fitted by wavelet moment matching")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Wavelet variances and cross-covariances with confidence intervals.
    Moments {
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        moments: MomentArgs,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
    },
    /// Fit a model spec to data; writes a JSON report and a moment table.
    Fit {
        data: PathBuf,
        spec: PathBuf,
        /// JSON report.
        #[arg(long)]
        out: PathBuf,
        /// Moment table with implied moments, for overlay plots.
        #[arg(long)]
        table: Option<PathBuf>,
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        moments: MomentArgs,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, value_enum, default_value_t = WeightingArg::Diag)]
        weighting: WeightingArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Simulate datasets from a model spec with parameter values.
    Simulate {
        spec: PathBuf,
        /// Samples per channel.
        #[arg(long)]
        length: usize,
        /// Output CSV; several replicates get `_r000`, `_r001`, ... suffixes.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        replicates: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Comma-separated parameter values, overriding the spec file.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        theta: Option<Vec<f64>>,
    },
    /// Parametric-bootstrap test of the cross-channel parameters.
    TestDep {
        data: PathBuf,
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        moments: MomentArgs,
        #[arg(long, value_enum, default_value_t = WeightingArg::Diag)]
        weighting: WeightingArg,
        #[arg(long, default_value_t = 99)]
        bootstrap: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        threads: Option<usize>,
    },
}

#[derive(Debug, Args)]
struct InputArgs {
    /// Subtract each channel's mean.
    #[arg(long)]
    demean: bool,
    /// Columns to use, by name or 1-based position.
    #[arg(long, value_delimiter = ',')]
    columns: Option<Vec<String>>,
    /// Sampling rate in Hz, recorded in reports.
    #[arg(long)]
    rate: Option<f64>,
}

impl InputArgs {
    fn options(&self) -> IngestOptions {
        IngestOptions {
            demean: self.demean,
            columns: self.columns.clone(),
            rate: self.rate,
        }
    }
}

#[derive(Debug, Args)]
struct MomentArgs {
    /// Number of wavelet levels (default: the largest usable).
    #[arg(long)]
    levels: Option<usize>,
    /// HAC truncation lag: `adaptive`, `cube-root` or a fixed lag.
    #[arg(long, default_value = "adaptive", value_parser = parse_bandwidth)]
    bandwidth: Bandwidth,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum WeightingArg {
    Diag,
    Full,
}

impl From<WeightingArg> for Weighting {
    fn from(w: WeightingArg) -> Self {
        match w {
            WeightingArg::Diag => Weighting::Diagonal,
            WeightingArg::Full => Weighting::Full,
        }
    }
}

fn parse_bandwidth(s: &str) -> Result<Bandwidth, String> {
    match s {
        "adaptive" => Ok(Bandwidth::LevelAdaptive),
        "cube-root" => Ok(Bandwidth::CubeRoot),
        _ => s
            .parse()
            .map(Bandwidth::Fixed)
            .map_err(|_| format!("expected `adaptive`, `cube-root` or a lag, got {s:?}")),
    }
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn with_threads<R: Send>(threads: Option<usize>, job: impl FnOnce() -> R + Send) -> crate::Result<R> {
    match threads {
        None => Ok(job()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidParameters(format!("cannot start {n} threads: {e}")))?;
            Ok(pool.install(job))
        }
    }
}

fn execute(command: Command) -> crate::Result<i32> {
    match command {
        Command::Moments {
            data,
            out,
            input,
            moments,
            alpha,
        } => {
            let dataset = ingest(&data, &input.options())?;
            cmd_moments(&dataset, moments.levels, alpha, moments.bandwidth, &out)?;
            Ok(EXIT_OK)
        }
        Command::Fit {
            data,
            spec,
            out,
            table,
            input,
            moments,
            alpha,
            weighting,
            seed,
            threads,
        } => {
            let spec_file = read_spec_file(&spec)?;
            let dataset = ingest(&data, &input.options())?;
            let options = FitOptions {
                levels: moments.levels,
                weighting: weighting.into(),
                bandwidth: moments.bandwidth,
                seed,
                ..FitOptions::default()
            };
            let report = with_threads(threads, || {
                cmd_fit(&dataset, &spec_file, &options, alpha, &out, table.as_deref())
            })??;
            for warning in &report.diagnostics.warnings {
                eprintln!("warning: {warning}");
            }
            if report.converged {
                Ok(EXIT_OK)
            } else {
                eprintln!("error: the optimizer did not converge; the report holds its best point");
                Ok(EXIT_NUMERICAL)
            }
        }
        Command::Simulate {
            spec,
            length,
            out,
            replicates,
            seed,
            theta,
        } => {
            let spec_file = read_spec_file(&spec)?;
            let theta = theta.map(ParamVector::new);
            cmd_simulate(&spec_file, theta.as_ref(), length, replicates, seed, &out)?;
            Ok(EXIT_OK)
        }
        Command::TestDep {
            data,
            spec,
            out,
            input,
            moments,
            weighting,
            bootstrap,
            seed,
            threads,
        } => {
            let spec_file = read_spec_file(&spec)?;
            let dataset = ingest(&data, &input.options())?;
            let options = DepTestOptions {
                bootstrap,
                seed,
                fit: FitOptions {
                    levels: moments.levels,
                    weighting: weighting.into(),
                    bandwidth: moments.bandwidth,
                    seed,
                    ..FitOptions::default()
                },
            };
            with_threads(threads, || cmd_testdep(&dataset, &spec_file, &options, &out))??;
            Ok(EXIT_OK)
        }
    }
}
