//! `pursuit`: simulate pursuit episodes, analyze trajectories with CCM,
//! reshape results for plotting, and run the built-in oracles.
//!
//! Exit codes: 0 success, 1 usage/config error, 2 data error, 3 selftest
//! failure.

mod analyze;
mod common;
mod report;
mod simulate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use common::CliError;

#[derive(Parser)]
#[command(name = "pursuit", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run evaluation episodes and write a trajectory file.
    Simulate(SimulateArgs),
    /// Compute reward statistics, CCM curves, and convergence verdicts from
    /// a trajectory file.
    Analyze(AnalyzeArgs),
    /// Reshape analyze output into plot-ready curve data and a stats table.
    Report(ReportArgs),
    /// Run the built-in numerical oracles and report pass/fail per oracle.
    Selftest,
}

#[derive(Args)]
struct SimulateArgs {
    /// Config file (TOML); omitted means built-in defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Predator strategy.
    #[arg(long, value_parser = ["chaser", "spring"])]
    condition: Option<String>,
    /// Replace predator 0 with the double-pendulum driver.
    #[arg(long)]
    perturbed: Option<bool>,
    /// Episodes to record.
    #[arg(long)]
    episodes: Option<usize>,
    /// Steps per episode.
    #[arg(long)]
    steps: Option<usize>,
    /// Top-level seed; every sub-seed derives from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Output trajectory file.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads (0 = library default).
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Input trajectory file.
    #[arg(long = "in")]
    input: PathBuf,
    /// Config file (TOML); omitted means built-in defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// The predator whose causal influence is measured.
    #[arg(long, default_value_t = 0)]
    source_agent: usize,
    /// Directory for curves.csv, stats.csv, verdicts.csv.
    #[arg(long)]
    out_dir: PathBuf,
    /// Condition label for the output tables (default: input file stem).
    #[arg(long)]
    label: Option<String>,
    /// Worker threads (0 = library default).
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Args)]
struct ReportArgs {
    /// curves.csv produced by analyze.
    #[arg(long)]
    curves: PathBuf,
    /// stats.csv produced by analyze.
    #[arg(long)]
    stats: PathBuf,
    /// Directory for report_curves.csv and report_table.txt.
    #[arg(long)]
    out_dir: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Simulate(args) => with_pool(args.threads, || simulate::run(&args)),
        Command::Analyze(args) => with_pool(args.threads, || analyze::run(&args)),
        Command::Report(args) => report::run(&args),
        Command::Selftest => selftest(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn with_pool<F>(threads: usize, f: F) -> Result<(), CliError>
where
    F: FnOnce() -> Result<(), CliError> + Send,
{
    if threads == 0 {
        return f();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Usage(format!("could not build thread pool: {e}")))?;
    pool.install(f)
}

fn selftest() -> Result<(), CliError> {
    let reports = pursuit_core::selftest::run_all();
    let mut all_passed = true;
    for r in &reports {
        let tag = if r.passed { "PASS" } else { "FAIL" };
        println!("[{tag}] {} - {}", r.name, r.detail);
        all_passed &= r.passed;
    }
    let passed = reports.iter().filter(|r| r.passed).count();
    println!("selftest: {passed}/{} oracles passed", reports.len());
    if all_passed {
        Ok(())
    } else {
        Err(CliError::SelftestFailed)
    }
}
