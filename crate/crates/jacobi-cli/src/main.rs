use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use jacobi_cli::run::{self, Common};

/// Numerical laboratory for frozen and stochastic Jacobi particle systems.
#[derive(Parser)]
#[command(name = "jacobi-lab", version, about, disable_help_subcommand = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Output directory for artifacts (trajectory.csv, report.csv, ...).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Seed override for stochastic runs.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker pool size (default: available parallelism).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Validate configs and regime hypotheses without computing.
    #[arg(long, global = true)]
    dry_run: bool,

    /// Allow overwriting existing output files.
    #[arg(long, global = true)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the frozen particle flow from a configured start.
    OdeRun {
        #[arg(long)]
        config: PathBuf,
    },
    /// Simulate the stochastic particle system.
    SdeRun {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the ordered zeros of a Jacobi polynomial.
    Zeros {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        beta: f64,
    },
    /// Run a limit-law experiment and score moment gaps.
    LimitCheck {
        #[arg(long)]
        config: PathBuf,
    },
    /// Integrate the closed finite-N moment system.
    MomentOracle {
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate a measure expression to a moment vector.
    FreeprobEval {
        #[arg(long)]
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let common = Common {
        out: cli.out,
        seed: cli.seed,
        jobs: cli.jobs,
        dry_run: cli.dry_run,
        force: cli.force,
    };
    if let Some(jobs) = common.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
        {
            eprintln!("config error: cannot size the worker pool: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Command::OdeRun { config } => run::ode_run(config, &common),
        Command::SdeRun { config } => run::sde_run(config, &common),
        Command::Zeros { n, alpha, beta } => run::zeros(*n, *alpha, *beta, &common),
        Command::LimitCheck { config } => run::limit_check(config, &common),
        Command::MomentOracle { config } => run::moment_oracle(config, &common),
        Command::FreeprobEval { config } => run::freeprob_eval(config, &common),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
