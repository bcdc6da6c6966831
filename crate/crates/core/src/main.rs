use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fastk::cli::{cmd_bounds, cmd_plot, cmd_schedule, cmd_simulate, Overrides, Report};

/// Fastest-k distributed SGD simulator.
#[derive(Parser)]
#[command(name = "fastk", version)]
struct Cli {
    /// Replace the config's seed list with a single seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for output files (overrides `output_dir` in the config).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured mode and seed, writing one trace CSV per run.
    Simulate { config: PathBuf },
    /// Evaluate fixed-k and scheduled error-bound curves.
    Bounds { config: PathBuf },
    /// Compute the bound-optimal switching schedule.
    Schedule { config: PathBuf },
    /// Overlay error-vs-time traces in one SVG.
    Plot {
        out: PathBuf,
        #[arg(required = true)]
        traces: Vec<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let ov = Overrides {
        seed: cli.seed,
        out_dir: cli.out_dir,
    };
    let result = match &cli.command {
        Command::Simulate { config } => cmd_simulate(config, &ov),
        Command::Bounds { config } => cmd_bounds(config, &ov),
        Command::Schedule { config } => cmd_schedule(config, &ov),
        Command::Plot { out, traces } => cmd_plot(out, traces),
    };
    match result {
        Ok(report) => finish(report),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn finish(report: Report) -> ExitCode {
    for line in &report.summary {
        println!("{line}");
    }
    for path in &report.written {
        eprintln!("wrote {}", path.display());
    }
    if report.is_success() {
        return ExitCode::SUCCESS;
    }
    eprintln!("{} run(s) failed:", report.failures.len());
    for (label, err) in &report.failures {
        eprintln!("  {label}: {err}");
    }
    ExitCode::FAILURE
}
