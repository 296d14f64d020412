//! Command-line flags and the optional `key = value` config file.
//!
//! A config file is spliced into the argument list right after the
//! subcommand, so every key is validated exactly like the flag of the same
//! name and any flag given on the command line wins.

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "kafgp", version, about = "Online GP and kernel LMS experiments", args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum CommandKind {
    Compare,
    Reconverge,
    Uncertainty,
    Verify,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Learning curves on a stationary regression set.
    Compare(Flags),
    /// Seed-averaged prediction error around an abrupt channel switch.
    Reconverge(Flags),
    /// Predictive mean and standard deviation on a 1-D grid.
    Uncertainty(Flags),
    /// Run the equivalence checks and print a pass/fail table.
    Verify(Flags),
}

impl Command {
    pub fn split(self) -> (CommandKind, Flags) {
        match self {
            Command::Compare(f) => (CommandKind::Compare, f),
            Command::Reconverge(f) => (CommandKind::Reconverge, f),
            Command::Uncertainty(f) => (CommandKind::Uncertainty, f),
            Command::Verify(f) => (CommandKind::Verify, f),
        }
    }
}

/// Flags shared by all subcommands. Unset values fall back to
/// per-command defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// `key = value` file with defaults for any of these flags.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,

    #[arg(long)]
    pub kernel_lengthscale: Option<f64>,
    /// Signal variance of the Gaussian kernel.
    #[arg(long)]
    pub kernel_variance: Option<f64>,
    #[arg(long)]
    pub noise_var: Option<f64>,
    #[arg(long)]
    pub jitter: Option<f64>,

    /// Comma-separated list, e.g. `gp,gp:200,klms,klms:0.2,qklms:0.1,knlms,beta:0,beta:1`.
    #[arg(long)]
    pub algs: Option<String>,
    /// β for a bare `beta` entry.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Step size for `klms`, `qklms` and `knlms`.
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub eps_reg: Option<f64>,
    #[arg(long)]
    pub quant_radius: Option<f64>,
    #[arg(long)]
    pub coherence_mu0: Option<f64>,
    /// Dictionary budget for a bare `gp` entry.
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long)]
    pub admission_threshold: Option<f64>,

    /// Synthetic data: `kin-like` or `sine`.
    #[arg(long, conflicts_with = "csv")]
    pub gen: Option<String>,
    /// Regression CSV with rows `x_1,…,x_d,y`.
    #[arg(long, value_name = "PATH")]
    pub csv: Option<PathBuf>,
    /// Skip the first CSV row.
    #[arg(long)]
    pub header: bool,
    #[arg(long)]
    pub dim: Option<usize>,
    /// Training size, stream length, or (verify) stream length for the weight identities.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub n_test: Option<usize>,
    /// Base seed; replicate `s` uses `seed + s`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of replicates.
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long)]
    pub eval_every: Option<usize>,

    #[arg(long)]
    pub switch_at: Option<usize>,
    /// `source-window` or `output-history`.
    #[arg(long)]
    pub switch_input: Option<String>,
    /// Moving-average window for reconvergence curves (1 = raw).
    #[arg(long)]
    pub smooth: Option<usize>,

    /// Comma-separated prefix sizes for `uncertainty`.
    #[arg(long)]
    pub prefixes: Option<String>,
    /// Grid as `min:max:points`.
    #[arg(long, allow_hyphen_values = true)]
    pub grid: Option<String>,

    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Also write each model's final state next to the CSV.
    #[arg(long)]
    pub dump_state: bool,
    /// Override every tolerance in `verify`.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Add this much to ε in the KNLMS side of the β = 1 check (negative control).
    #[arg(long)]
    pub noise_mismatch: Option<f64>,
}

const BOOL_KEYS: [&str; 2] = ["header", "dump-state"];

/// Parses a config file into flag tokens. Keys may use `-` or `_`.
pub fn config_tokens(text: &str) -> CliResult<Vec<String>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("config line {}: expected key = value", i + 1)))?;
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        if key == "config" {
            return Err(CliError::usage(format!("config line {}: nested config files are not supported", i + 1)));
        }
        if BOOL_KEYS.contains(&key.as_str()) {
            match value {
                "true" => out.push(format!("--{key}")),
                "false" => {}
                _ => {
                    return Err(CliError::usage(format!(
                        "config line {}: {key} must be true or false",
                        i + 1
                    )))
                }
            }
        } else {
            out.push(format!("--{key}"));
            out.push(value.to_string());
        }
    }
    Ok(out)
}

fn config_path(args: &[OsString]) -> Option<PathBuf> {
    let mut it = args.iter().skip(2);
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

/// Returns `args` with the referenced config file's entries inserted after
/// the subcommand.
pub fn expand_config(args: Vec<OsString>) -> CliResult<Vec<OsString>> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let text = fs::read_to_string(&path)
        .map_err(|e| CliError::usage(format!("cannot read config file {}: {e}", path.display())))?;
    let tokens = config_tokens(&text)?;
    let mut out: Vec<OsString> = args[..2].to_vec();
    out.extend(tokens.into_iter().map(OsString::from));
    out.extend(args[2..].iter().cloned());
    Ok(out)
}
