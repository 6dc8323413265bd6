//! `lorapath` — command-line front end for the path-loss toolkit.
//!
//! Exit codes: 0 on success, 1 on a validation error (bad flags, missing
//! paths, inconsistent data), 2 on an I/O or provider failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use config::{FileConfig, FlagOverrides, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl From<lorapath::pipeline::IngestError> for CliError {
    fn from(err: lorapath::pipeline::IngestError) -> Self {
        use lorapath::pipeline::IngestError;
        match err {
            IngestError::Schema(_) | IngestError::BadGateway { .. } => {
                CliError::Validation(err.to_string())
            }
            IngestError::Csv(_) | IngestError::Io(_) => CliError::Runtime(err.to_string()),
        }
    }
}

impl From<lorapath::pipeline::PipelineError> for CliError {
    fn from(err: lorapath::pipeline::PipelineError) -> Self {
        CliError::Validation(err.to_string())
    }
}

impl From<lorapath::fitting::FitError> for CliError {
    fn from(err: lorapath::fitting::FitError) -> Self {
        CliError::Validation(err.to_string())
    }
}

impl From<lorapath::analysis::AnalysisError> for CliError {
    fn from(err: lorapath::analysis::AnalysisError) -> Self {
        CliError::Validation(err.to_string())
    }
}

impl From<lorapath::models::CatalogError> for CliError {
    fn from(err: lorapath::models::CatalogError) -> Self {
        use lorapath::models::CatalogError;
        match err {
            CatalogError::Io { .. } => CliError::Runtime(err.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<lorapath::synth::SynthError> for CliError {
    fn from(err: lorapath::synth::SynthError) -> Self {
        CliError::Validation(err.to_string())
    }
}

/// Path-loss modeling and evaluation for LoRaWAN measurement campaigns.
#[derive(Parser)]
#[command(name = "lorapath", version, about)]
struct Cli {
    /// TOML config file; flags given here override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Samples CSV (packet_id,timestamp,gateway_id,lat,lon,alt_m,satellites,rpp_dbm,sf).
    #[arg(long, global = true)]
    samples: Option<PathBuf>,
    /// Gateways CSV (gateway_id,lat,lon,height_m,gain_dbi).
    #[arg(long, global = true)]
    gateways: Option<PathBuf>,
    /// Model catalog JSON; the built-in catalog is used when omitted.
    #[arg(long, global = true)]
    catalog: Option<PathBuf>,
    /// Output directory for artifacts (default: out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed for everything randomized (default: 1).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Snap provider: identity, fixture:PATH, or live:URL.
    #[arg(long, global = true)]
    snap: Option<String>,
    /// Street-snap offset ceiling in meters (default: 20).
    #[arg(long, global = true)]
    max_offset_m: Option<f64>,
    /// Minimum locked GPS satellites (default: 5).
    #[arg(long, global = true)]
    min_satellites: Option<u32>,
    /// Altitude ceiling in meters; required by the filter stages, no default.
    #[arg(long, global = true)]
    max_altitude_m: Option<f64>,
    /// Distance bin width for fitting in meters (default: 10).
    #[arg(long, global = true)]
    bin_width_m: Option<f64>,
    /// Reference distance d0 in meters (default: 1000).
    #[arg(long, global = true)]
    d0_m: Option<f64>,
    /// Comma-separated subset sizes for the convergence analysis.
    #[arg(long, global = true, value_delimiter = ',')]
    subset_sizes: Option<Vec<usize>>,
    /// Repeats per convergence subset size (default: 20).
    #[arg(long, global = true)]
    repeats: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct SynthCliArgs {
    /// Number of samples to generate.
    #[arg(long, default_value_t = 50_000)]
    count: usize,
    /// Shadow-fading sigma in dB.
    #[arg(long, default_value_t = 8.0)]
    sigma: f64,
    /// Ground-truth path-loss exponent.
    #[arg(long, default_value_t = 2.0)]
    n: f64,
    /// Ground-truth intercept at d0 in dB.
    #[arg(long, default_value_t = 130.0)]
    pl_d0: f64,
    /// Minimum link distance in meters.
    #[arg(long, default_value_t = 50.0)]
    min_distance_m: f64,
    /// Maximum link distance in meters.
    #[arg(long, default_value_t = 13_000.0)]
    max_distance_m: f64,
    /// Draw distances uniformly instead of log-uniformly.
    #[arg(long)]
    uniform: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate the input files.
    Ingest,
    /// Run the four-stage filter chain and write the clean corpus.
    Filter,
    /// Fit the log-distance model and characterize shadow fading.
    Fit,
    /// Compare every catalog model against the measurements.
    Eval,
    /// Fit coefficients over increasing maximum link distance.
    Progression,
    /// Sample-size convergence of the fit.
    Convergence,
    /// Generate a synthetic corpus with a known ground truth.
    Synth(SynthCliArgs),
    /// Run the whole workflow and bundle everything into report.json.
    Report,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(path) => {
            config::require_exists("config", path)?;
            FileConfig::load(path)?
        }
        None => FileConfig::default(),
    };
    let flags = FlagOverrides {
        samples: cli.samples,
        gateways: cli.gateways,
        catalog: cli.catalog,
        out: cli.out,
        seed: cli.seed,
        snap: cli.snap,
        max_offset_m: cli.max_offset_m,
        min_satellites: cli.min_satellites,
        max_altitude_m: cli.max_altitude_m,
        bin_width_m: cli.bin_width_m,
        d0_m: cli.d0_m,
        subset_sizes: cli.subset_sizes,
        repeats: cli.repeats,
    };
    let run_config = RunConfig::resolve(file, flags)?;
    run_config.validate_common()?;

    match cli.command {
        Command::Ingest => commands::run_ingest(&run_config),
        Command::Filter => commands::run_filter(&run_config),
        Command::Fit => commands::run_fit(&run_config),
        Command::Eval => commands::run_eval(&run_config),
        Command::Progression => commands::run_progression(&run_config),
        Command::Convergence => commands::run_convergence(&run_config),
        Command::Synth(args) => commands::run_synth(
            &run_config,
            &commands::SynthArgs {
                count: args.count,
                sigma_db: args.sigma,
                n: args.n,
                pl_d0_db: args.pl_d0,
                min_distance_m: args.min_distance_m,
                max_distance_m: args.max_distance_m,
                uniform: args.uniform,
            },
        ),
        Command::Report => commands::run_report(&run_config),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
