use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sddp_reg_cli::commands::{self, GenDataArgs, EXIT_ERROR};

#[derive(Parser)]
#[command(
    name = "sddp-reg",
    version,
    about = "Regularized dual dynamic programming solvers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Deterministic DDP or REDDP run.
    SolveDet {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `output.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// SDDP or SDDP-REG run, sampled or full-tree.
    SolveStoch {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Extensive-form solve of a (small) problem.
    Oracle {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Runs every variant of a suite on every instance.
    Bench {
        #[arg(long)]
        suite: PathBuf,
        #[arg(long, default_value = "bench-out")]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Synthetic lognormal returns.
    GenData {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 6)]
        n: usize,
        #[arg(long = "T", default_value_t = 12)]
        horizon: usize,
        #[arg(long = "M", default_value_t = 60)]
        samples: usize,
        #[arg(long, default_value_t = 0.01, allow_negative_numbers = true)]
        drift: f64,
        #[arg(long, default_value_t = 0.05, allow_negative_numbers = true)]
        vol: f64,
        #[arg(long, default_value_t = 1.002)]
        cash: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SDDP_REG_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::SolveDet { config, out } => commands::solve_det(&config, out.as_deref()),
        Command::SolveStoch { config, out } => commands::solve_stoch(&config, out.as_deref()),
        Command::Oracle { config, out } => commands::oracle(&config, out.as_deref()),
        Command::Bench { suite, out, jobs } => commands::bench(&suite, &out, jobs),
        Command::GenData {
            seed,
            n,
            horizon,
            samples,
            drift,
            vol,
            cash,
            out,
        } => commands::gen_data(&GenDataArgs {
            seed,
            n,
            horizon,
            samples,
            drift,
            vol,
            cash_return: cash,
            out,
        }),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}
