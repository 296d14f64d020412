//! The `compare`, `reconverge` and `uncertainty` commands.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use kafgp::datasets::{
    gen_kinematics_like, gen_sine_1d, gen_switch_series, load_csv, RegressionSet, SwitchScenario,
};
use kafgp::evaluation::{
    average_curves, run_comparison, run_reconvergence, run_uncertainty_trace, Algorithm, LearningCurve,
    ReconvergenceCurve, UncertaintyTrace,
};

use crate::config::{DataSource, RunConfig};
use crate::error::{CliError, CliResult};

pub const LEARNING_CURVE_FILE: &str = "learning_curve.csv";
pub const RECONVERGENCE_FILE: &str = "reconvergence.csv";
pub const UNCERTAINTY_FILE: &str = "uncertainty.csv";

pub(crate) fn write_output(dir: &Path, name: &str, contents: &str) -> CliResult<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

/// Trains a fresh copy of every algorithm on the pairs and writes its state
/// as `state_<label>.txt`.
fn dump_states(cfg: &RunConfig, inputs: &[Vec<f64>], targets: &[f64]) -> CliResult<Vec<PathBuf>> {
    let mut written = Vec::new();
    for alg in &cfg.algorithms {
        let mut model = alg.build(&cfg.spec)?;
        for (x, &y) in inputs.iter().zip(targets) {
            model.update(x, y)?;
        }
        let name = format!("state_{}.txt", alg.label().replace(':', "_"));
        written.push(write_output(&cfg.out, &name, &model.snapshot())?);
    }
    Ok(written)
}

fn load_source(cfg: &RunConfig) -> CliResult<Option<RegressionSet>> {
    match &cfg.data {
        DataSource::Csv { path, dim, header } => Ok(Some(load_csv(path, *dim, *header)?)),
        _ => Ok(None),
    }
}

/// Train/test split for replicate `seed`.
fn stationary_split(
    cfg: &RunConfig,
    loaded: Option<&RegressionSet>,
    seed: u64,
) -> CliResult<(RegressionSet, RegressionSet)> {
    match (&cfg.data, loaded) {
        (DataSource::Csv { .. }, Some(set)) => {
            let n = cfg.n.unwrap_or(set.len() / 2);
            let n_test = cfg.n_test.unwrap_or(set.len().saturating_sub(n));
            let (train, test) = set.shuffle_split(seed, n, n_test)?;
            if test.is_empty() {
                return Err(CliError::usage(format!("no rows left for testing after {n} training rows")));
            }
            Ok((train, test))
        }
        (DataSource::KinLike { dim }, _) => {
            let n = cfg.n.unwrap_or(1000);
            Ok(gen_kinematics_like(seed, n, cfg.n_test.unwrap_or(n), *dim)?)
        }
        (DataSource::Sine { noise_std }, _) => {
            let n = cfg.n.unwrap_or(1000);
            let n_test = cfg.n_test.unwrap_or(n);
            Ok(gen_sine_1d(seed, n + n_test, *noise_std).shuffle_split(seed, n, n_test)?)
        }
        (DataSource::Csv { .. }, None) => unreachable!("CSV data is loaded before splitting"),
    }
}

pub fn learning_curve_csv(curves: &[LearningCurve]) -> String {
    let mut out = String::from("algorithm,step,nmse_db\n");
    for c in curves {
        for (step, v) in &c.points {
            let _ = writeln!(out, "{},{step},{v}", c.algorithm);
        }
    }
    out
}

pub fn reconvergence_csv(curves: &[ReconvergenceCurve], switch_at: usize, smooth: usize) -> String {
    let mut out = format!("# switch_at={switch_at}\nalgorithm,step,mean_sq_error_db\n");
    for c in curves {
        for (step, v) in c.smoothed_db(smooth).iter().enumerate() {
            let _ = writeln!(out, "{},{step},{v}", c.algorithm);
        }
    }
    out
}

pub fn uncertainty_csv(traces: &[UncertaintyTrace]) -> String {
    let mut out = String::from("algorithm,prefix,x,mean,std\n");
    for t in traces {
        for ((x, m), s) in t.grid.iter().zip(&t.mean).zip(&t.std) {
            let _ = writeln!(out, "{},{},{x},{m},{s}", t.algorithm, t.prefix);
        }
    }
    out
}

pub fn cmd_compare(cfg: &RunConfig) -> CliResult<Vec<PathBuf>> {
    let loaded = load_source(cfg)?;
    let mut replicates = Vec::with_capacity(cfg.seeds);
    let mut first_train = None;
    for s in 0..cfg.seeds {
        let (train, test) = stationary_split(cfg, loaded.as_ref(), cfg.seed + s as u64)?;
        replicates.push(run_comparison(&cfg.algorithms, &cfg.spec, &train, &test, cfg.eval_every)?);
        if s == 0 {
            first_train = Some(train);
        }
    }
    let curves = average_curves(&replicates)?;
    let mut written = vec![write_output(&cfg.out, LEARNING_CURVE_FILE, &learning_curve_csv(&curves))?];
    if cfg.dump_state {
        let train = first_train.expect("at least one replicate");
        written.extend(dump_states(cfg, &train.inputs, &train.targets)?);
    }
    Ok(written)
}

pub fn switch_scenario(cfg: &RunConfig) -> CliResult<SwitchScenario> {
    let n_total = cfg.n.unwrap_or(1000);
    let mut scenario = SwitchScenario::random(cfg.seed, n_total, cfg.switch_at);
    scenario.input = cfg.switch_input;
    scenario.validate()?;
    Ok(scenario)
}

pub fn cmd_reconverge(cfg: &RunConfig) -> CliResult<Vec<PathBuf>> {
    let scenario = switch_scenario(cfg)?;
    let curves = run_reconvergence(&scenario, &cfg.algorithms, &cfg.spec, cfg.seeds)?;
    let csv = reconvergence_csv(&curves, scenario.switch_at, cfg.smooth);
    let mut written = vec![write_output(&cfg.out, RECONVERGENCE_FILE, &csv)?];
    if cfg.dump_state {
        let series = gen_switch_series(&scenario.reseeded(scenario.seed))?;
        written.extend(dump_states(cfg, &series.inputs, &series.targets)?);
    }
    Ok(written)
}

pub fn cmd_uncertainty(cfg: &RunConfig) -> CliResult<Vec<PathBuf>> {
    let wanted: Vec<String> = cfg.algorithms.iter().map(Algorithm::label).collect();
    if let Some(bad) = wanted.iter().find(|l| !["gp", "beta:0", "beta:1"].contains(&l.as_str())) {
        return Err(CliError::usage(format!(
            "uncertainty traces cover gp, beta:0 and beta:1, not {bad}"
        )));
    }
    let largest = *cfg.prefixes.iter().max().expect("prefixes are non-empty");
    let data = match &cfg.data {
        DataSource::Sine { noise_std } => gen_sine_1d(cfg.seed, largest, *noise_std),
        DataSource::KinLike { .. } => gen_kinematics_like(cfg.seed, largest, 1, 1)?.0,
        DataSource::Csv { path, dim, header } => load_csv(path, *dim, *header)?,
    };
    if data.len() < largest {
        return Err(CliError::usage(format!(
            "prefix {largest} needs {largest} observations, data has {}",
            data.len()
        )));
    }
    let traces: Vec<UncertaintyTrace> = run_uncertainty_trace(&data, &cfg.prefixes, &cfg.grid, &cfg.spec)?
        .into_iter()
        .filter(|t| wanted.contains(&t.algorithm))
        .collect();
    let mut written = vec![write_output(&cfg.out, UNCERTAINTY_FILE, &uncertainty_csv(&traces))?];
    if cfg.dump_state {
        written.extend(dump_states(cfg, &data.inputs[..largest], &data.targets[..largest])?);
    }
    Ok(written)
}
