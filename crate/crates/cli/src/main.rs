#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod args;
mod commands;
mod config;
mod error;
mod math;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use config::RunConfig;
use error::CliResult;

fn run(cli: Cli) -> CliResult<()> {
    match &cli.command {
        Command::Train(a) => commands::cmd_train(&RunConfig::resolve(a)?),
        Command::Eval(a) => commands::cmd_eval(a),
        Command::Sweep(a) => commands::cmd_sweep(a),
        Command::Topk(a) => commands::cmd_topk(a),
        Command::RotateProbe(a) => commands::cmd_rotate_probe(a),
        Command::GenSynthetic(a) => commands::cmd_gen_synthetic(a),
        Command::Math(m) => {
            let value = math::run(m)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&value).expect("JSON value serializes")
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let Some(hint) = e.hint().filter(|h| !e.to_string().contains(h)) {
                eprintln!("hint: {hint}");
            }
            ExitCode::from(e.code())
        }
    }
}
