//! `firmscan` command-line entry point.

mod args;
mod commands;
mod config;
mod error;
mod pipeline;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command, FeedCommand};
use config::RunConfig;
use error::CliError;

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .init();
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(&cli.global, |k| std::env::var(k).ok())?;
    log::debug!("{cfg:?}");
    match &cli.command {
        Command::Feed(FeedCommand::Ingest { feeds }) => commands::feed_ingest(&cfg, feeds),
        Command::Feed(FeedCommand::Fetch { cpe_name, keyword, url }) => {
            commands::feed_fetch(&cfg, cpe_name.as_deref(), keyword.as_deref(), url.as_deref())
        }
        Command::Scan { image } => commands::scan_cmd(&cfg, image),
        Command::Analyze { input } => commands::analyze_cmd(&cfg, input),
        Command::Corpus { dir, top_cwes, top_cpes } => commands::corpus_cmd(&cfg, dir, *top_cwes, *top_cpes),
        Command::Impact { occurrences, firmware_count } => commands::impact_cmd(&cfg, occurrences, *firmware_count),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.global.verbose);
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
