mod args;
mod commands;
mod error;
mod output;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use error::{CliError, EXIT_CONFIG};
use output::Run;

fn seed_of(command: &Command) -> Option<u64> {
    match command {
        Command::Estimate(a) => Some(a.seed),
        Command::Sweep(a) => Some(a.seed),
        Command::Distribution(a) => Some(a.seed),
        Command::Cohort(a) => a.seed,
        Command::Validate { .. } | Command::Oracle(_) => None,
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(workers) = cli.workers {
        if workers == 0 {
            return Err(CliError::Config("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let config = serde_json::json!({ "command": &cli.command, "workers": cli.workers });
    let run = Run::new(config, seed_of(&cli.command));
    match &cli.command {
        Command::Validate { model } => commands::validate_cmd(model),
        Command::Estimate(a) => commands::estimate_cmd(a, run),
        Command::Oracle(c) => commands::oracle_cmd(c, run),
        Command::Sweep(a) => commands::sweep_cmd(a, run),
        Command::Distribution(a) => commands::distribution_cmd(a, run),
        Command::Cohort(a) => commands::cohort_cmd(a, run),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
