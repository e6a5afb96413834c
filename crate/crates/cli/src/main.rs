//! `irtrack` command-line front end.

mod experiments;
mod nav;
mod output;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use output::CliError;

/// Seed used when `--seed` is not given.
pub const DEFAULT_SEED: u64 = 20_240_601;

/// Environment variable naming the default tracker config file.
pub const CONFIG_ENV: &str = "IRTRACK_CONFIG";

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  1  other failure
  2  usage error (unknown flag, bad argument value)
  3  malformed or unreadable input file
  4  degenerate geometry (registration, fit or pivot)

Units: millimetres, degrees and seconds throughout.";

#[derive(Parser)]
#[command(name = "irtrack", version, about = "Retro-reflective marker tracking with a simulated depth camera", after_help = EXIT_CODES)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

/// Flags accepted by every subcommand.
#[derive(Args, Clone, Debug)]
pub struct Global {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Repetitions for experiments that repeat.
    #[arg(long, global = true)]
    pub reps: Option<usize>,
    /// Frame count (simulated frames, frames per pose or per station).
    #[arg(long, global = true)]
    pub frames: Option<usize>,
    /// Tracker config JSON; defaults to the file named by IRTRACK_CONFIG.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Render a static scene into AHF frames.
    #[command(after_help = EXIT_CODES)]
    Simulate(pipeline::SimulateArgs),
    /// Detect markers in AHF frames.
    #[command(after_help = EXIT_CODES)]
    Detect(pipeline::DetectArgs),
    /// Build a tool definition from frames of a single tool.
    #[command(after_help = EXIT_CODES)]
    DefineTool(pipeline::DefineToolArgs),
    /// Check that loaded tools cannot be confused.
    #[command(after_help = EXIT_CODES)]
    ValidateTools(pipeline::ValidateToolsArgs),
    /// Track tools through AHF frames and write a JSON-lines pose log.
    #[command(after_help = EXIT_CODES)]
    Track(pipeline::TrackArgs),
    /// Static accuracy experiment, with and without depth filtering.
    #[command(after_help = EXIT_CODES)]
    Accuracy(experiments::AccuracyArgs),
    /// Workspace sweep along x or z, optionally with a field-of-view search.
    #[command(after_help = EXIT_CODES)]
    Sweep(experiments::SweepArgs),
    /// Tracking throughput for every loaded/visible tool count.
    #[command(after_help = EXIT_CODES)]
    Bench(experiments::BenchArgs),
    /// Delay between a reference and a tracked motion trace.
    #[command(after_help = EXIT_CODES)]
    Latency(experiments::LatencyArgs),
    /// Static-plane noise study and quadratic noise fit.
    #[command(after_help = EXIT_CODES)]
    NoiseFit(experiments::NoiseFitArgs),
    /// Translation and angle errors between planned and executed trajectories.
    #[command(after_help = EXIT_CODES)]
    ScoreTrajectories(nav::ScoreArgs),
}

fn run(cli: Cli) -> Result<(), CliError> {
    let g = cli.global;
    match cli.command {
        Command::Simulate(a) => pipeline::simulate(&g, a),
        Command::Detect(a) => pipeline::detect(&g, a),
        Command::DefineTool(a) => pipeline::define_tool(&g, a),
        Command::ValidateTools(a) => pipeline::validate_tools(&g, a),
        Command::Track(a) => pipeline::track(&g, a),
        Command::Accuracy(a) => experiments::accuracy(&g, a),
        Command::Sweep(a) => experiments::sweep(&g, a),
        Command::Bench(a) => experiments::bench(&g, a),
        Command::Latency(a) => experiments::latency(&g, a),
        Command::NoiseFit(a) => experiments::noise_fit(&g, a),
        Command::ScoreTrajectories(a) => nav::score(&g, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
