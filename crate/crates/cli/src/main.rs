mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use spdelab::Error;

use crate::commands::Status;
use crate::config::RunConfig;

#[derive(Parser)]
#[command(name = "spdelab", version, about = "Pathwise convergence and L0 checks for a stochastic heat equation")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON run configuration; defaults apply to missing fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Print the resolved configuration and exit.
    #[arg(long, global = true)]
    dry_run: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Compare assembled matrices with closed forms.
    AssembleCheck,
    /// Coupled convergence study; writes CSV, SVG and gnuplot files.
    Convergence,
    /// Monte Carlo checks of the L0 inequalities and the Hölder estimator.
    Verify,
    /// Hölder exponent of simulated trajectories.
    Holder,
    /// One path of the scheme; writes the final state.
    Simulate,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Numerical(_) | Error::DegenerateReference => 2,
        Error::StatisticalAlarm(_) => 3,
        _ => 1,
    }
}

fn run(cli: &Cli) -> Result<Status, Error> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.scheme.master_seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    cfg.validate()?;
    if cli.dry_run {
        println!("{}", serde_json::to_string_pretty(&cfg)?);
        return Ok(Status::Ok);
    }
    if let Some(n) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Domain(format!("worker pool: {e}")))?;
    }
    let out = cfg.output_dir.clone();
    match cli.command {
        Command::AssembleCheck => commands::assemble_check(&cfg, &out),
        Command::Convergence => commands::convergence(&cfg, &out),
        Command::Verify => commands::verify(&cfg, &out),
        Command::Holder => commands::holder(&cfg, &out),
        Command::Simulate => commands::simulate(&cfg, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Failed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
