//! `pathtomo`: simulate campaigns, reconstruct states and tabulate rate
//! curves.
//!
//! Exit codes: 0 success, 1 other failure, 2 unreadable input or unknown
//! fixture, 3 campaign generation failed, 4 singular design, 5 fit did not
//! converge (best-so-far output is still written) or too many scan cells
//! failed.

mod commands;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "pathtomo", version, about = "Path-entangled two-photon tomography toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TomoMode {
    Linear,
    Mle,
    Vis,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic record set from a campaign plan.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        plan: PathBuf,
        /// Fixture name (ideal, mixed, dashed-theta=θ) or state JSON file.
        #[arg(long, default_value = "ideal")]
        state: String,
        /// Overrides the seed in the plan.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct a density matrix from records.
    Tomo {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "mle")]
        mode: TomoMode,
        #[arg(long, allow_hyphen_values = true)]
        phi1: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        phi2: Option<f64>,
        #[arg(long, default_value_t = 0x5eed)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Nine-record fidelity over a grid of phase pairs.
    Scan {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Grid size as `n1xn2`.
        #[arg(long, default_value = "10x10")]
        grid: String,
        /// Worker threads; defaults to the available parallelism.
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long, default_value_t = 0x5eed)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tabulate all seven rate kinds over a 64-point phase sweep.
    Curves {
        /// Fixture name or state JSON file.
        #[arg(long, default_value = "ideal")]
        state: String,
        /// Balanced lossless optics when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Side-peak normalized rates instead of raw pair probabilities.
        #[arg(long)]
        normalized: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate {
            config,
            plan,
            state,
            seed,
            out,
        } => commands::simulate(&config, &plan, &state, seed, &out),
        Command::Tomo {
            records,
            config,
            mode,
            phi1,
            phi2,
            seed,
            out,
        } => commands::tomo(&records, &config, mode, phi1.zip(phi2), seed, &out),
        Command::Scan {
            records,
            config,
            grid,
            jobs,
            seed,
            out,
        } => commands::scan(&records, &config, &grid, jobs, seed, &out),
        Command::Curves {
            state,
            config,
            normalized,
            out,
        } => commands::curves(&state, config.as_deref(), normalized, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pathtomo: {:#}", e.error);
            ExitCode::from(e.code)
        }
    }
}
