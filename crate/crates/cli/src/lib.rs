//! Command-line front end for `rbocp`: JSON experiment configs in, CSV
//! results out.
//!
//! | subcommand   | writes                                                |
//! |--------------|-------------------------------------------------------|
//! | `solve`      | `trajectory.csv`, `trace.csv`                         |
//! | `robustness` | `invdyn/trace_*.csv`, `ilqr/trace_*.csv`, `summary.csv` |
//! | `benchmark`  | `benchmark.csv`                                       |
//! | `check`      | nothing; prints one PASS/FAIL line per oracle suite   |
//!
//! Exit codes: 0 success, 1 usage or config error, 2 non-convergence,
//! 3 numerical failure.

use std::num::NonZeroUsize;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub mod commands;
pub mod config;
pub mod output;

use commands::{Outcome, RunSettings};
use config::{ExperimentConfig, CHAIN7_ROBUSTNESS};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("numerical failure: {0}")]
    Numerical(#[from] rbocp::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io(_) | CliError::Csv(_) => 1,
            CliError::Numerical(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "rbocp", version, about = "Inverse-dynamics optimal control for rigid-body systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one problem and write trajectory.csv and trace.csv.
    Solve(RunArgs),
    /// Time single iterations of both solvers on chain models.
    Benchmark(RunArgs),
    /// Random initial states through both solvers (chain7 reaching by default).
    Robustness(RunArgs),
    /// Run the derivative, condensing and Riccati oracle suites.
    Check(CheckArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<NonZeroUsize>,
    /// Overrides the config's trial count.
    #[arg(long)]
    pub trials: Option<NonZeroUsize>,
    /// Write zeros in every timing column.
    #[arg(long)]
    pub no_timing: bool,
}

#[derive(Debug, Clone, Args)]
pub struct CheckArgs {
    #[arg(long, default_value_t = 100)]
    pub instances: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn load(args: &RunArgs, fallback: Option<&str>) -> Result<(ExperimentConfig, RunSettings), CliError> {
    let mut cfg = match (&args.config, fallback) {
        (Some(p), _) => ExperimentConfig::from_path(p)?,
        (None, Some(text)) => ExperimentConfig::from_json(text)?,
        (None, None) => return Err(CliError::Config("--config is required".into())),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    let threads = args.threads.unwrap_or(cfg.threads).get();
    let out = args.out.clone().or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
    Ok((cfg, RunSettings { out, threads, timing: !args.no_timing }))
}

fn dispatch(cli: &Cli) -> Result<u8, CliError> {
    match &cli.command {
        Command::Solve(args) => {
            let (cfg, run) = load(args, None)?;
            let outcome = commands::solve(&cfg, &run)?;
            println!("solve: {outcome:?}; wrote {}", run.out.display());
            Ok(if outcome == Outcome::Converged { 0 } else { 2 })
        }
        Command::Robustness(args) => {
            let (cfg, run) = load(args, Some(CHAIN7_ROBUSTNESS))?;
            let trials = cfg.trials.get();
            let outcomes = commands::robustness(&cfg, trials, &run)?;
            for method in ["invdyn", "ilqr"] {
                let ok = outcomes.iter().filter(|o| o.method == method && o.converged).count();
                println!("{method}: {ok}/{trials} converged");
            }
            println!("wrote {}", run.out.join("summary.csv").display());
            Ok(0)
        }
        Command::Benchmark(args) => {
            let (cfg, run) = load(args, Some(CHAIN7_ROBUSTNESS))?;
            let trials = args.trials.map_or(cfg.benchmark.trials, NonZeroUsize::get);
            for r in commands::benchmark(&cfg, trials, &run)? {
                println!(
                    "{:<6} dof {:>2} N {:>3} threads {} : {:.4} ± {:.4} ms/iter (stage {:.4})",
                    r.method, r.dof, r.stages, r.threads, r.mean_ms, r.stddev_ms, r.stage_ms
                );
            }
            println!("wrote {}", run.out.join("benchmark.csv").display());
            Ok(0)
        }
        Command::Check(args) => {
            let lines = commands::check(args.instances, args.seed)?;
            for l in &lines {
                println!("{l}");
            }
            Ok(if lines.iter().all(|l| l.passed()) { 0 } else { 3 })
        }
    }
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: &Cli) -> u8 {
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Parses `args` (including the program name) and runs it.
pub fn run_from<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&cli),
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            code
        }
    }
}
