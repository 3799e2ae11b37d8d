//! `xmodal`: batch command-line front end for the cross-modal analysis engine.
//!
//! Every command prints one report (JSON by default, CSV with `--output csv`)
//! that embeds the manifest of resolved parameters needed to rerun it.
//! Failures print `error[code]: message` on stderr and exit with status 1.

mod args;
mod commands;
mod error;
mod output;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use commands::Ctx;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error[threads]: {e}");
            return ExitCode::FAILURE;
        }
    }
    let ctx = Ctx {
        seed: cli.seed,
        output: cli.output,
        quiet: cli.quiet,
    };
    let result = match &cli.command {
        Command::Gap(a) => commands::gap(&ctx, a),
        Command::Retrieve(a) => commands::retrieve(&ctx, a),
        Command::Train(a) => commands::train(&ctx, a),
        Command::Heatmap(a) => commands::heatmap(&ctx, a),
        Command::Compare(a) => commands::compare(&ctx, a),
        Command::IngestCheck(a) => commands::ingest_check(&ctx, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            ExitCode::FAILURE
        }
    }
}
