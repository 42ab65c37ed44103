//! Command-line front end: simulation, estimation, backtests, evaluation
//! studies and Marčenko-Pastur scale fits.

mod commands;
mod config;
mod io;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::CommonArgs;

#[derive(Parser)]
#[command(name = "nirvar", version, about = "Network informed restricted VAR estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a panel from a planted block model.
    Simulate(CommonArgs),
    /// Learn the restrictions and estimate one response feature.
    Estimate(CommonArgs),
    /// Rolling one-step-ahead backtest against the baselines.
    Backtest(CommonArgs),
    /// Simulation studies, prediction comparisons and recovery checks.
    Eval(CommonArgs),
    /// Fit the Marčenko-Pastur scale to a spectrum.
    Mpfit(CommonArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(args) => commands::simulate::run(args),
        Command::Estimate(args) => commands::estimate::run(args),
        Command::Backtest(args) => commands::backtest::run(args),
        Command::Eval(args) => commands::eval::run(args),
        Command::Mpfit(args) => commands::mpfit::run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}
