//! Command-line pipeline and HTTP service for stylized response generation.

pub mod args;
pub mod commands;
pub mod config;
pub mod engine;
pub mod error;
pub mod service;

use std::ffi::OsString;

use clap::{CommandFactory, FromArgMatches};

use args::{Cli, Command};
use error::{CliResult, Failure};

fn parse(argv: Vec<OsString>) -> Result<Cli, clap::Error> {
    let matches = Cli::command().try_get_matches_from(argv)?;
    Cli::from_arg_matches(&matches)
}

fn clap_exit(e: clap::Error) -> i32 {
    use clap::error::ErrorKind;
    match e.kind() {
        ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
            let _ = e.print();
            0
        }
        _ => {
            let _ = e.print();
            1
        }
    }
}

fn subcommand_name(c: &Command) -> &'static str {
    match c {
        Command::SynthData(_) => "synth-data",
        Command::Train(_) => "train",
        Command::TrainClassifiers(_) => "train-classifiers",
        Command::BuildTestset(_) => "build-testset",
        Command::Eval(_) => "eval",
        Command::SweepRho(_) => "sweep-rho",
        Command::Mds(_) => "mds",
        Command::Generate(_) => "generate",
        Command::Serve(_) => "serve",
    }
}

fn dispatch(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::SynthData(a) => commands::synth_data(a),
        Command::Train(a) => commands::train(a),
        Command::TrainClassifiers(a) => commands::train_classifiers_cmd(a),
        Command::BuildTestset(a) => commands::build_testset(a),
        Command::Eval(a) => commands::eval(a),
        Command::SweepRho(a) => commands::sweep(a),
        Command::Mds(a) => commands::mds(a),
        Command::Generate(a) => commands::generate(a),
        Command::Serve(a) => commands::serve(a),
    }
}

/// Runs the CLI and returns the process exit code: 0 on success, 1 for
/// input errors (bad flags, unreadable or malformed files), 2 for internal
/// failures.
pub fn run(argv: Vec<OsString>) -> i32 {
    let mut cli = match parse(argv.clone()) {
        Ok(c) => c,
        Err(e) => return clap_exit(e),
    };
    if let Some(path) = cli.config.clone() {
        let name = subcommand_name(&cli.command);
        let rewritten = match config::apply_config(&Cli::command(), argv, &path, name) {
            Ok(a) => a,
            Err(e) => return report(e),
        };
        cli = match parse(rewritten) {
            Ok(c) => c,
            Err(e) => return clap_exit(e),
        };
    }

    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
    if let Some(n) = cli.threads {
        if n == 0 {
            return report(Failure::input("--threads must be at least 1"));
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("thread pool already initialized: {e}");
        }
    }
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => report(e),
    }
}

fn report(e: Failure) -> i32 {
    eprintln!("error: {e}");
    e.exit_code()
}
