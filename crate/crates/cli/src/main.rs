//! `pgn`: generate traces, train and evaluate pointer graph networks, and
//! run the structural and credit analyses.
//!
//! Successful commands print one JSON document on stdout. Failures print
//! `{"error": <kind>, "message": <text>}` on stderr and exit with a code
//! from [`error::exit`].

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pgn_core::evalkit::PointerMetric;
use pgn_core::pgn::Variant;
use pgn_core::tracegen::Kind;

use crate::error::{exit, CliError};

/// Thread count for data-parallel evaluation and generation.
pub const THREADS_ENV: &str = "PGN_THREADS";

#[derive(Parser, Debug)]
#[command(
    name = "pgn",
    version,
    about = "Pointer graph networks over data-structure traces"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a dataset of episodes.
    Generate(GenerateArgs),
    /// Train one model per seed and evaluate it on every held-out split.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Free-running rollout with per-step structure report and DOT export.
    Rollout(RolloutArgs),
    /// Readout credit-assignment shares.
    Credit(CreditArgs),
    /// Finite-difference gradient check of the full episode loss.
    Gradcheck(GradcheckArgs),
    /// Replay a dataset against the naive connectivity oracle.
    Validate(ValidateArgs),
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long, value_parser = parse_kind)]
    pub kind: Kind,
    /// TOML dataset spec (kind, master_seed, splits); defaults to the
    /// standard protocol.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Full protocol: standard splits, 5000 epochs, five seeds.
    #[arg(long)]
    pub paper: bool,
    #[arg(long, value_parser = parse_variant)]
    pub variant: Option<Variant>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Existing dataset directory; overrides the config.
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub report: PathBuf,
    /// First-phase checkpoint supplying pointers to a learned-pointer model.
    #[arg(long)]
    pub pointers: Option<PathBuf>,
    #[arg(long, value_parser = parse_metric, default_value = "carried")]
    pub pointer_metric: PointerMetric,
}

#[derive(Args, Debug)]
pub struct RolloutArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// JSONL episode file.
    #[arg(
        long,
        conflicts_with = "pathological",
        required_unless_present = "pathological"
    )]
    pub episode: Option<PathBuf>,
    /// Line of the episode file to roll out.
    #[arg(long, default_value_t = 0)]
    pub index: usize,
    /// Use the chain-building protocol on this many nodes.
    #[arg(long)]
    pub pathological: Option<usize>,
    #[arg(long)]
    pub dot: PathBuf,
    #[arg(long)]
    pub pointers: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CreditArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Restrict to one split; default is every split but `train`.
    #[arg(long)]
    pub split: Option<String>,
    /// Per-step shares as JSONL.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub pointers: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    #[arg(long, value_delimiter = ',', value_parser = parse_variant, default_value = "pgn,pgn_nm,gnn")]
    pub variants: Vec<Variant>,
    #[arg(long, default_value_t = 32)]
    pub latent: usize,
    #[arg(long, default_value_t = 5)]
    pub nodes: usize,
    #[arg(long, default_value_t = 3)]
    pub steps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-5)]
    pub threshold: f64,
}

#[derive(Args, Debug)]
pub struct ValidateArgs {
    #[arg(long)]
    pub data: PathBuf,
}

fn parse_kind(s: &str) -> Result<Kind, String> {
    s.parse().map_err(|e: pgn_core::Error| e.to_string())
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: pgn_core::Error| e.to_string())
}

fn parse_metric(s: &str) -> Result<PointerMetric, String> {
    match s {
        "carried" => Ok(PointerMetric::Carried),
        "teacher_forced_argmax" => Ok(PointerMetric::TeacherForcedArgmax),
        _ => Err(format!("unknown pointer metric '{s}'")),
    }
}

fn report_error(kind: &str, message: &str) {
    eprintln!(
        "{}",
        serde_json::json!({ "error": kind, "message": message })
    );
}

fn configure_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .parse()
            .map_err(|_| CliError::Config(format!("{THREADS_ENV} must be a positive integer")))?;
        if n == 0 {
            return Err(CliError::Config(format!(
                "{THREADS_ENV} must be a positive integer"
            )));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<serde_json::Value, CliError> {
    configure_threads()?;
    match cli.command {
        Command::Generate(a) => commands::generate(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Rollout(a) => commands::rollout(&a),
        Command::Credit(a) => commands::credit(&a),
        Command::Gradcheck(a) => commands::gradcheck(&a),
        Command::Validate(a) => commands::validate(&a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            report_error("usage", e.render().to_string().trim());
            return ExitCode::from(exit::USAGE as u8);
        }
    };
    match run(cli) {
        Ok(out) => {
            println!(
                "{}",
                serde_json::to_string_pretty(&out).expect("serialisable")
            );
            ExitCode::from(exit::OK as u8)
        }
        Err(e) => {
            report_error(e.kind(), &e.to_string());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
