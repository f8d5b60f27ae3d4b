mod artifact;
mod config;
mod error;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;
use error::CliError;

/// Calibration and tree pricing for the path-dependent, ESG-valued BBSM model.
#[derive(Debug, Parser)]
#[command(name = "bbsm", version)]
struct Cli {
    /// Worker threads for ticker, affinity and subtree jobs.
    #[arg(long, global = true, env = "BBSM_WORKERS")]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the index sign path, cumulative path and filtered integral.
    Csyip(RunConfig),
    /// Fit risky and riskless coefficients for each ticker and ESG affinity.
    Calibrate(RunConfig),
    /// Price call surfaces on the non-recombining tree.
    Price(RunConfig),
    /// Write a synthetic index, stock, rates and ESG data set.
    Simulate(RunConfig),
    /// Write density comparisons of fitted and observed changes, and the index path.
    Diagnose(RunConfig),
}

fn run(cli: Cli) -> Result<Vec<PathBuf>, CliError> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(CliError::Config("worker count must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let (name, cfg): (&'static str, RunConfig) = match cli.command {
        Command::Csyip(c) => ("csyip", c),
        Command::Calibrate(c) => ("calibrate", c),
        Command::Price(c) => ("price", c),
        Command::Simulate(c) => ("simulate", c),
        Command::Diagnose(c) => ("diagnose", c),
    };
    let cfg = cfg.merged()?;
    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("."));
    let resolved = cfg.resolve(name)?;
    match name {
        "csyip" => run::csyip(resolved, &out),
        "calibrate" => run::calibrate(resolved, &out),
        "price" => run::price(resolved, &out),
        "simulate" => run::simulate(resolved, &out),
        _ => run::diagnose(resolved, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            eprintln!("{}", e.structured());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
