//! `mimic`: command-line driver for training, checking and evaluating
//! motion-mimicking policies.
//!
//! Exit codes: 0 success, 2 configuration or input error, 3 numeric
//! failure (simulation instability, divergence), 4 gradient check failure.

mod args;
mod commands;
mod error;
mod run_config;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use error::{CliError, CliResult};

fn dispatch(cli: &Cli) -> CliResult {
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Train(a) => commands::cmd_train(a, out),
        Command::Gradcheck(a) => commands::cmd_gradcheck(a, out),
        Command::Ablate(a) => commands::cmd_ablate(a, out),
        Command::Rollout(a) => commands::cmd_rollout(a, out),
        Command::Evaluate(a) => commands::cmd_evaluate(a, out),
        Command::GenRef(a) => commands::cmd_gen_ref(a, out),
    }
}

fn run(cli: &Cli) -> CliResult {
    match cli.jobs {
        Some(0) => Err(CliError::Config("--jobs must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?
            .install(|| dispatch(cli)),
        None => dispatch(cli),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
