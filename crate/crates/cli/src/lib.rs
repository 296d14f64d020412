//! Experiment runner for `kafgp`: learning curves, channel-switch
//! reconvergence, predictive uncertainty traces and the verification suite.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod verify;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::Parser;

pub use args::{Cli, CommandKind, Flags};
pub use config::RunConfig;
pub use error::{CliError, CliResult};

pub fn cmd_verify(cfg: &RunConfig) -> CliResult<Vec<PathBuf>> {
    let checks = verify::run_checks(cfg)?;
    print!("{}", verify::table(&checks));
    let path = commands::write_output(&cfg.out, verify::VERIFY_FILE, &verify::checks_csv(&checks))?;
    if checks.iter().all(verify::Check::passed) {
        Ok(vec![path])
    } else {
        Err(CliError::VerificationFailed)
    }
}

pub fn execute(cfg: &RunConfig) -> CliResult<Vec<PathBuf>> {
    match cfg.command {
        CommandKind::Compare => commands::cmd_compare(cfg),
        CommandKind::Reconverge => commands::cmd_reconverge(cfg),
        CommandKind::Uncertainty => commands::cmd_uncertainty(cfg),
        CommandKind::Verify => cmd_verify(cfg),
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Errors are reported on standard error.
pub fn run(args: Vec<OsString>) -> i32 {
    let args = match args::expand_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("{e}");
            return e.exit_code();
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    let (kind, flags) = cli.command.split();
    let result = RunConfig::resolve(kind, &flags).and_then(|cfg| execute(&cfg));
    match result {
        Ok(paths) => {
            for p in paths {
                println!("wrote {}", p.display());
            }
            0
        }
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
