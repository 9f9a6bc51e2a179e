mod commands;
mod config;
mod plot;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fuzzformer::ErrorKind;

use commands::{
    BaselineArgs, EvaluateArgs, FetchArgs, ForecastArgs, PrepareArgs, ReportArgs, TrainArgs,
};

#[derive(Parser)]
#[command(
    name = "fuzzformer",
    version,
    about = "Fuzzy-rule transformer forecaster"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Download a `date,value` series into the cache
    Fetch(FetchArgs),
    /// Align, scale, window and split sources into a dataset file
    Prepare(PrepareArgs),
    /// Train a model and keep the best-validation checkpoint
    Train(TrainArgs),
    /// Score a checkpoint on one split
    Evaluate(EvaluateArgs),
    /// Forecast from a window CSV and export the rule bundle
    Forecast(ForecastArgs),
    /// Score a reference forecaster
    Baseline(BaselineArgs),
    /// Tabulate results files
    Report(ReportArgs),
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let kind = err
        .chain()
        .find_map(|e| e.downcast_ref::<fuzzformer::Error>())
        .map(fuzzformer::Error::kind);
    match kind {
        Some(ErrorKind::Usage) => 1,
        Some(ErrorKind::Numeric) => 3,
        Some(ErrorKind::Data) | None => 2,
    }
}

fn closed_pipe(err: &anyhow::Error) -> bool {
    err.chain()
        .filter_map(|e| e.downcast_ref::<std::io::Error>())
        .any(|e| e.kind() == std::io::ErrorKind::BrokenPipe)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match &cli.command {
        Command::Fetch(a) => commands::fetch(a),
        Command::Prepare(a) => commands::prepare(a),
        Command::Train(a) => commands::train_cmd(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Forecast(a) => commands::forecast(a),
        Command::Baseline(a) => commands::baseline(a),
        Command::Report(a) => commands::report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if closed_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
