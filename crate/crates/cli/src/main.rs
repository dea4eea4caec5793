//! `hnp`: fit, apply and simulate hierarchical Neyman-Pearson classifiers.
//!
//! Errors are written to stderr as `{"error":{"code":..,"message":..}}` and
//! the process exits with status 1 (2 for command-line usage errors).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod run;

use std::process::ExitCode;

use clap::Parser;

use config::{RunConfig, Task};

#[derive(Debug, Parser)]
#[command(name = "hnp", version, about)]
struct Cli {
    /// Task to run; may instead be given as `task` in the config file.
    task: Option<Task>,
    #[command(flatten)]
    config: RunConfig,
}

fn fail(code: &str, message: &str, status: u8) -> ExitCode {
    let body = serde_json::json!({ "error": { "code": code, "message": message } });
    eprintln!("{body}");
    ExitCode::from(status)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("HNP_LOG", "warn"))
        .format_timestamp(None)
        .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", e.to_string().trim(), 2),
    };
    let config = match cli.config.resolve() {
        Ok(c) => c,
        Err(e) => return fail(e.code(), &e.to_string(), 1),
    };
    let Some(task) = cli.task.or(config.task) else {
        return fail(
            "usage",
            "no task given; expected one of simulate, fit, predict, evaluate, sweep, featurize",
            2,
        );
    };
    match run::execute(task, &config) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.code(), &e.to_string(), 1),
    }
}
