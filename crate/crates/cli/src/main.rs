use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nmbath::{load_config, run, Command};

#[derive(Parser)]
#[command(
    name = "nmbath",
    version,
    about = "Random-rate non-Markovian open-system analyses"
)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(clap::Args)]
struct Common {
    /// Run configuration (`section.key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Monte Carlo seed; overrides `solver.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo trajectory count; overrides `solver.trajectories`.
    #[arg(long)]
    trajectories: Option<usize>,
}

#[derive(Subcommand)]
enum Sub {
    /// Waiting-time, survival, sprinkling and kernel series.
    Kernel(Common),
    /// Density-matrix evolution with each configured solver.
    Evolve(Common),
    /// Two-time correlators and the regression residual.
    Correlate(Common),
    /// Minimum Choi eigenvalue of the reconstructed maps.
    Cpcheck(Common),
    /// Log-log power-law fit of the waiting-time density.
    Fitpow(Common),
}

fn threads_from_env() -> Result<Option<usize>, String> {
    match std::env::var("NMBATH_THREADS") {
        Err(_) => Ok(None),
        Ok(s) => s
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .map(Some)
            .ok_or_else(|| format!("NMBATH_THREADS must be a positive integer, got `{s}`")),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, common) = match cli.command {
        Sub::Kernel(c) => (Command::Kernel, c),
        Sub::Evolve(c) => (Command::Evolve, c),
        Sub::Correlate(c) => (Command::Correlate, c),
        Sub::Cpcheck(c) => (Command::Cpcheck, c),
        Sub::Fitpow(c) => (Command::Fitpow, c),
    };
    let threads = match threads_from_env() {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let mut cfg = match load_config(&common.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    if let Some(dir) = common.out {
        cfg.output.dir = dir;
    }
    if let Some(seed) = common.seed {
        cfg.solver.seed = seed;
    }
    if let Some(n) = common.trajectories {
        cfg.solver.trajectories = n;
    }
    match run(cmd, &cfg, threads) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
