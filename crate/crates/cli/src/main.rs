//! `femap`: experiment driver for face-embedding mapping.
//!
//! Exit codes: 0 success, 2 usage or invalid parameters, 3 I/O,
//! 4 malformed or inconsistent data files, 5 diverged training.

mod commands;
mod opts;
mod report;

use std::process::ExitCode;

use clap::Parser;

use opts::{Cli, Command, ConfigFile};

/// Bad flags, config values or parameter combinations.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_FORMAT: u8 = 4;
pub const EXIT_DIVERGED: u8 = 5;

fn exit_code(err: &anyhow::Error) -> u8 {
    use femap::Error as E;
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return EXIT_USAGE;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Io(_) => EXIT_IO,
                E::Diverged(_) => EXIT_DIVERGED,
                E::InvalidArgument(_) | E::BatchTooSmall(_) | E::Degenerate { .. } => EXIT_USAGE,
                E::Shape { .. }
                | E::ZeroVector
                | E::BadMagic { .. }
                | E::Version { .. }
                | E::Truncated { .. }
                | E::Checksum { .. }
                | E::Malformed { .. } => EXIT_FORMAT,
            };
        }
        if cause.is::<std::io::Error>() {
            return EXIT_IO;
        }
    }
    1
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let common = match &cli.command {
        Command::Synth { common, .. }
        | Command::Train { common, .. }
        | Command::Map { common, .. }
        | Command::Protect { common, .. }
        | Command::Leak { common, .. }
        | Command::Eval { common, .. } => common,
    };
    let file = ConfigFile::load(common.config.as_deref())?;
    let seed = opts::check_seed(common.seed.or(file.seed).unwrap_or(0), "seed")?;
    match cli.command {
        Command::Synth { common, opts } => commands::synth(&common, seed, opts.merged(file.synth)),
        Command::Train { common, opts } => commands::train(&common, seed, opts.merged(file.train)),
        Command::Map { common, opts } => commands::map(&common, seed, opts.merged(file.map)),
        Command::Protect { common, opts } => {
            commands::protect(&common, seed, opts.merged(file.protect))
        }
        Command::Leak { common, opts } => commands::leak(&common, seed, opts.merged(file.leak)),
        Command::Eval { common, opts } => commands::eval(&common, seed, opts.merged(file.eval)),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
