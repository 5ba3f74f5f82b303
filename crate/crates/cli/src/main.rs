mod args;
mod config;
mod error;
mod evaluate;
mod propagate;
mod run;
mod stabilize;
mod toy;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use config::RunConfig;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (args, command): (_, fn(&RunConfig) -> Result<(), error::CliError>) = match &cli.command {
        Command::Stabilize(a) => (a, stabilize::run),
        Command::Propagate(a) => (a, propagate::run),
        Command::Evaluate(a) => (a, evaluate::run),
        Command::Toy(a) => (a, toy::run),
    };
    let result = RunConfig::resolve(args).and_then(|cfg| {
        if args.print_config {
            print!("{}", cfg.to_toml());
            return Ok(());
        }
        command(&cfg)
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
