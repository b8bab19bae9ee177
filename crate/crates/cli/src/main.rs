//! `calib`: data generation, LTI fit, synthesis, CALIB training, closed-loop simulation and
//! evaluation. Every command writes its artifacts plus `<command>.config.json` (the fully
//! resolved configuration) into `--out-dir`.

// `!(x > y)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

/// Failure classes, each with its own exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Core(#[from] calib_core::Error),
    #[error("invalid arguments: {0}")]
    Usage(String),
    #[error("{0}")]
    Infeasible(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use calib_core::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::Infeasible(_) => 3,
            CliError::Core(e) => match e {
                E::Io(_) => 4,
                E::IndexOutOfRange { .. }
                | E::TrajectoryTooShort { .. }
                | E::DimensionMismatch { .. }
                | E::InvalidLayout(_)
                | E::InvalidConfig(_)
                | E::Format(_)
                | E::Json(_) => 2,
                E::Csv(err) if err.is_io_error() => 4,
                E::Csv(_) => 2,
                E::RankDeficient { .. }
                | E::Singular(_)
                | E::NonFinite(_)
                | E::Diverged { .. }
                | E::IllConditioned(_) => 3,
            },
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(if cli.quiet { "warn" } else { "info" }))
        .format_timestamp(None)
        .init();
    let out = cli.out_dir.clone();
    let result = match cli.command {
        Command::GenData(a) => commands::gen_data(&out, a),
        Command::FitLti(a) => commands::fit_lti(&out, a),
        Command::Synth(a) => commands::synth(&out, a),
        Command::TrainCalib(a) => commands::train_calib(&out, a),
        Command::Simulate(a) => commands::simulate(&out, a),
        Command::Eval(a) => commands::eval(&out, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
