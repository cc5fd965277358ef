//! `hmopt`: coverage lookup, capacity evaluation, constellation design and
//! rate-region sweeps.
//!
//! Exit codes: 0 success, 2 argument error, 3 semantic input error,
//! 4 infeasible problem, 5 internal numerical failure.

mod commands;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use error::{CliError, CliResult};
use manifest::{default_manifest_path, write_atomic, Artifact, OutputRecord, RunManifest, STDOUT};

#[derive(Debug, Parser)]
#[command(name = "hmopt", version, about = "Hierarchical-modulation constellation design for AWGN broadcast")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// SNR exceeded by a share of users, or the share exceeding an SNR.
    Coverage(CoverageArgs),
    /// BICM-SIC rates of a constellation file.
    Capacity(CapacityArgs),
    /// Design a free hierarchical constellation.
    Optimize(OptimizeArgs),
    /// Optimize the H-QAM scale pair (d1, d2).
    Hqam(HqamArgs),
    /// Sweep HP thresholds and write rate-region frontiers.
    Region(RegionArgs),
    /// Re-run a recorded command and check its outputs.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CommonArgs {
    /// Manifest path (default: next to the first output file).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CoverageArgs {
    /// Share of covered users in percent, e.g. 90.
    #[arg(long, conflicts_with = "snr", required_unless_present = "snr", allow_negative_numbers = true)]
    pub percent: Option<f64>,
    /// SNR threshold in dB.
    #[arg(long, allow_negative_numbers = true)]
    pub snr: Option<f64>,
    /// Transmit power (dBm).
    #[arg(long, default_value_t = 66.0, allow_negative_numbers = true)]
    pub ps: f64,
    /// Noise power (dBm).
    #[arg(long, default_value_t = -95.0, allow_negative_numbers = true)]
    pub pn: f64,
    /// Cell radius (km).
    #[arg(long, default_value_t = 4.0)]
    pub radius: f64,
    /// Shadowing standard deviation (dB).
    #[arg(long, default_value_t = 8.0)]
    pub sigma: f64,
    /// Print JSON instead of a single number.
    #[arg(long)]
    pub json: bool,
    #[command(flatten)]
    #[serde(skip)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CapacityArgs {
    #[arg(long)]
    pub constellation: PathBuf,
    #[arg(long, allow_negative_numbers = true)]
    pub snr_h: f64,
    /// LP receiver SNR; required for the LP rate.
    #[arg(long, allow_negative_numbers = true)]
    pub snr_l: Option<f64>,
    /// Power the SNRs refer to (default: the constellation's average power).
    #[arg(long)]
    pub power_ref: Option<f64>,
    #[arg(long, default_value_t = 80)]
    pub nodes: usize,
    /// Also report Monte-Carlo estimates with standard errors.
    #[arg(long)]
    pub mc_check: bool,
    #[arg(long, default_value_t = 200_000)]
    pub mc_samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    #[serde(skip)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SymmetryArg {
    None,
    Central,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 20)]
    pub starts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Gauss-Hermite nodes per dimension.
    #[arg(long, default_value_t = 80)]
    pub nodes: usize,
    #[arg(long, default_value_t = 10.0)]
    pub mu_factor: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub kkt_tol: f64,
    #[arg(long, default_value_t = 50)]
    pub max_outer: usize,
    #[arg(long, default_value_t = 100)]
    pub max_inner: usize,
    /// Do not seed the free design with the optimized H-QAM.
    #[arg(long)]
    pub no_warm_start: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OptimizeArgs {
    #[arg(long)]
    pub mh: u32,
    #[arg(long)]
    pub ml: u32,
    #[arg(long, allow_negative_numbers = true)]
    pub snr_h: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub snr_l: f64,
    #[arg(long)]
    pub rstar: f64,
    #[arg(long, default_value_t = 1.0)]
    pub power: f64,
    /// PAPR cap.
    #[arg(long)]
    pub papr: Option<f64>,
    #[arg(long, value_enum, default_value_t = SymmetryArg::None)]
    pub symmetry: SymmetryArg,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Constellation JSON to write.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    #[serde(skip)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct HqamArgs {
    #[arg(long)]
    pub ml: u32,
    #[arg(long, allow_negative_numbers = true)]
    pub snr_h: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub snr_l: f64,
    #[arg(long)]
    pub rstar: f64,
    #[arg(long, default_value_t = 1.0)]
    pub power: f64,
    #[arg(long)]
    pub papr: Option<f64>,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Optional constellation JSON of the optimized H-QAM.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(skip)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeArg {
    Hm,
    Hqam,
    Td,
    Hull,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RegionArgs {
    #[arg(long)]
    pub mh: u32,
    #[arg(long)]
    pub ml: u32,
    #[arg(long, allow_negative_numbers = true)]
    pub snr_h: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub snr_l: f64,
    #[arg(long, default_value_t = 1.0)]
    pub power: f64,
    /// Number of HP thresholds on the default grid.
    #[arg(long, default_value_t = hmopt_core::rateregion::DEFAULT_GRID_POINTS)]
    pub points: usize,
    /// Explicit comma-separated thresholds instead of the default grid.
    #[arg(long, value_delimiter = ',')]
    pub thresholds: Option<Vec<f64>>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "hm,hqam,td,hull")]
    pub schemes: Vec<SchemeArg>,
    /// HP-rate grid size of the time-division frontier.
    #[arg(long, default_value_t = 101)]
    pub td_points: usize,
    #[arg(long)]
    pub papr: Option<f64>,
    #[arg(long, value_enum, default_value_t = SymmetryArg::None)]
    pub symmetry: SymmetryArg,
    /// Dominance margin for witness points (bits).
    #[arg(long, default_value_t = 0.01)]
    pub margin: f64,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Combined CSV; per-scheme files and a summary are written beside it.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    #[serde(skip)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReplayArgs {
    /// Manifest written by an earlier run.
    pub manifest_file: PathBuf,
    /// Rewrite the outputs instead of only comparing them.
    #[arg(long)]
    pub write: bool,
}

/// Outputs of a command before they are committed.
pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    pub parameters: serde_json::Value,
    pub seed: Option<u64>,
    /// Exit code to report after a successful write (partial sweeps).
    pub exit: Option<CliError>,
}

fn run_command(command: &Command) -> CliResult<(&'static str, Outcome)> {
    Ok(match command {
        Command::Coverage(a) => ("coverage", commands::coverage(a)?),
        Command::Capacity(a) => ("capacity", commands::capacity(a)?),
        Command::Optimize(a) => ("optimize", commands::optimize(a)?),
        Command::Hqam(a) => ("hqam", commands::hqam(a)?),
        Command::Region(a) => ("region", commands::region(a)?),
        Command::Replay(_) => unreachable!("replay is dispatched separately"),
    })
}

fn manifest_override(command: &Command) -> Option<PathBuf> {
    match command {
        Command::Coverage(a) => a.common.manifest.clone(),
        Command::Capacity(a) => a.common.manifest.clone(),
        Command::Optimize(a) => a.common.manifest.clone(),
        Command::Hqam(a) => a.common.manifest.clone(),
        Command::Region(a) => a.common.manifest.clone(),
        Command::Replay(_) => None,
    }
}

fn execute(cli: &Cli, argv: Vec<String>) -> CliResult<()> {
    if let Command::Replay(r) = &cli.command {
        return replay(r);
    }
    let started = Instant::now();
    let (name, outcome) = run_command(&cli.command)?;
    let mut records = Vec::with_capacity(outcome.artifacts.len());
    for a in &outcome.artifacts {
        if a.path == STDOUT {
            print!("{}", String::from_utf8_lossy(&a.bytes));
        } else {
            write_atomic(std::path::Path::new(&a.path), &a.bytes)?;
        }
        records.push(OutputRecord {
            path: a.path.clone(),
            sha256: a.digest(),
        });
    }
    let manifest = RunManifest {
        command: name.into(),
        argv,
        parameters: outcome.parameters,
        seed: outcome.seed,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        duration_seconds: started.elapsed().as_secs_f64(),
        outputs: records,
    };
    let path = manifest_override(&cli.command).unwrap_or_else(|| default_manifest_path(name, &outcome.artifacts));
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Internal(e.to_string()))?;
    write_atomic(&path, format!("{text}\n").as_bytes())?;
    match outcome.exit {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn replay(args: &ReplayArgs) -> CliResult<()> {
    let text = std::fs::read_to_string(&args.manifest_file)
        .map_err(|e| CliError::Usage(format!("reading {}: {e}", args.manifest_file.display())))?;
    let manifest: RunManifest =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("malformed manifest: {e}")))?;
    let cli = Cli::try_parse_from(std::iter::once("hmopt".to_string()).chain(manifest.argv.iter().cloned()))
        .map_err(|e| CliError::Usage(format!("manifest arguments no longer parse: {e}")))?;
    if matches!(cli.command, Command::Replay(_)) {
        return Err(CliError::Usage("a manifest cannot replay another replay".into()));
    }
    let (_, outcome) = run_command(&cli.command)?;
    let mut mismatches = Vec::new();
    for (record, artifact) in manifest.outputs.iter().zip(&outcome.artifacts) {
        let ok = record.path == artifact.path && record.sha256 == artifact.digest();
        println!("{} {}", if ok { "identical" } else { "DIFFERENT" }, record.path);
        if !ok {
            mismatches.push(record.path.clone());
        }
        if args.write && artifact.path != STDOUT {
            write_atomic(std::path::Path::new(&artifact.path), &artifact.bytes)?;
        }
    }
    if manifest.outputs.len() != outcome.artifacts.len() {
        mismatches.push("output count".into());
    }
    if mismatches.is_empty() {
        Ok(())
    } else {
        Err(CliError::Internal(format!("replay differs: {}", mismatches.join(", "))))
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(&cli, argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
