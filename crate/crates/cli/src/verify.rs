//! Self-check suite behind `kafgp verify`: online/batch GP agreement, the
//! KRLS weights, the rank-one inverse update and the three β-KLMS
//! identities, each reduced to a worst-case absolute deviation.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use kafgp::datasets::{gen_random_stream, RegressionSet};
use kafgp::evaluation::NO_PRUNING_THRESHOLD;
use kafgp::{
    batch_fit, general_alpha_update_oracle, gram_matrix, Dictionary, GpState, KernelSpec, KlmsState, StepSize,
    UpdateOutcome,
};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const VERIFY_FILE: &str = "verify.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub max_abs_diff: f64,
    pub tolerance: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.max_abs_diff < self.tolerance
    }
}

/// Max row sum of absolute values.
pub fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn stream_1d(spec: &KernelSpec, seed: u64, n: usize) -> CliResult<RegressionSet> {
    let l = spec.lengthscale;
    Ok(gen_random_stream(seed, n, 1, 100.0 * l, 0.5 * l)?)
}

fn stream_4d(spec: &KernelSpec, seed: u64, n: usize) -> CliResult<RegressionSet> {
    Ok(gen_random_stream(seed, n, 4, 5.0 * spec.lengthscale, 0.0)?)
}

fn online_vs_batch(spec: &KernelSpec, data: &RegressionSet, grid: &[Vec<f64>]) -> CliResult<f64> {
    let mut gp = GpState::new(*spec, None, NO_PRUNING_THRESHOLD)?;
    for (x, y) in data.iter() {
        gp.update(x, y)?;
    }
    let fit = batch_fit(spec, &Dictionary::from_points(data.inputs.clone())?, &data.targets)?;
    let mut worst = 0.0f64;
    for g in grid {
        let a = gp.predict(g)?;
        let b = fit.predict(g)?;
        worst = worst
            .max((a.mean - b.mean).abs())
            .max((a.output_variance - b.output_variance).abs());
    }
    Ok(worst)
}

fn check_online_batch(spec: &KernelSpec, seeds: usize) -> CliResult<[f64; 2]> {
    let mut worst = [0.0f64; 2];
    for s in 0..seeds as u64 {
        let data = stream_1d(spec, s, 200)?;
        let hw = 100.0 * spec.lengthscale;
        let grid: Vec<Vec<f64>> = (0..100).map(|i| vec![-hw + 2.0 * hw * i as f64 / 99.0]).collect();
        worst[0] = worst[0].max(online_vs_batch(spec, &data, &grid)?);

        let data = stream_4d(spec, s, 200)?;
        let hw = 5.0 * spec.lengthscale;
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + s);
        let grid: Vec<Vec<f64>> = (0..100)
            .map(|_| (0..4).map(|_| rng.random_range(-hw..hw)).collect())
            .collect();
        worst[1] = worst[1].max(online_vs_batch(spec, &data, &grid)?);
    }
    Ok(worst)
}

fn check_krls(spec: &KernelSpec, seeds: usize) -> CliResult<f64> {
    let mut worst = 0.0f64;
    for s in 0..seeds as u64 {
        let data = stream_4d(spec, 100 + s, 100)?;
        let mut gp = GpState::new(*spec, None, NO_PRUNING_THRESHOLD)?;
        for t in 0..data.len() {
            gp.update(&data.inputs[t], data.targets[t])?;
            let fit = batch_fit(spec, gp.dict(), &data.targets[..=t])?;
            worst = worst.max(max_diff(gp.krls_weights()?.as_slice(), fit.weights.as_slice()));
        }
    }
    Ok(worst)
}

fn check_rank_one(spec: &KernelSpec, seeds: usize) -> CliResult<f64> {
    let mut worst = 0.0f64;
    for s in 0..seeds as u64 {
        let data = stream_4d(spec, 200 + s, 100)?;
        let mut gp = GpState::new(*spec, None, NO_PRUNING_THRESHOLD)?;
        for (x, y) in data.iter() {
            if gp.update(x, y)?.0 == UpdateOutcome::Admitted {
                let k = gram_matrix(spec, gp.dict())?;
                let m = gp.len();
                worst = worst.max(inf_norm(&(gp.q_inv() * k - DMatrix::identity(m, m))));
            }
        }
    }
    Ok(worst)
}

/// β = 0 against type-I KLMS with the noise-matched step size.
fn check_identity_a(spec: &KernelSpec, seeds: usize, n: usize) -> CliResult<f64> {
    let mut worst = 0.0f64;
    for s in 0..seeds as u64 {
        let data = stream_4d(spec, 300 + s, n)?;
        let mut beta = KlmsState::beta(*spec, 0.0)?;
        let mut klms = KlmsState::type1(*spec, StepSize::NoiseMatched)?;
        for (x, y) in data.iter() {
            beta.beta_update(x, y)?;
            klms.type1_update(x, y)?;
            worst = worst.max(max_diff(beta.alpha(), klms.alpha()));
        }
    }
    Ok(worst)
}

/// β = 1 against all-admitting KNLMS with η = 1 and ε = σ_n² + `mismatch`.
fn check_identity_b(spec: &KernelSpec, seeds: usize, n: usize, mismatch: f64) -> CliResult<f64> {
    let mut worst = 0.0f64;
    for s in 0..seeds as u64 {
        let data = stream_4d(spec, 400 + s, n)?;
        let mut beta = KlmsState::beta(*spec, 1.0)?;
        let mut knlms = KlmsState::knlms(*spec, 1.0, spec.noise_variance + mismatch, 1.0)?;
        for (x, y) in data.iter() {
            beta.beta_update(x, y)?;
            knlms.knlms_update(x, y)?;
            worst = worst.max(max_diff(beta.alpha(), knlms.alpha()));
        }
    }
    Ok(worst)
}

fn inverse(k: &DMatrix<f64>) -> CliResult<DMatrix<f64>> {
    k.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| CliError::Numerical("Gram matrix is not positive definite".into()))
}

const IDENTITY_C_BETAS: [f64; 4] = [0.0, 0.25, 1.0, 2.0];

/// Exact weight update with the planted covariance `K(βK + I)` against β-KLMS.
fn check_identity_c(spec: &KernelSpec, seeds: usize) -> CliResult<[f64; 2]> {
    let spec = spec.with_jitter(0.0);
    let mut worst = [0.0f64; 2];
    for s in 0..seeds as u64 {
        for &beta in &IDENTITY_C_BETAS {
            let data = stream_1d(&spec, 500 + s, 30)?;
            let mut model = KlmsState::beta(spec, beta)?;
            for (x, y) in data.iter() {
                let oracle = if model.is_empty() {
                    None
                } else {
                    let k = gram_matrix(&spec, model.dict())?;
                    let q = inverse(&k)?;
                    let mu = &k * DVector::from_column_slice(model.alpha());
                    let m = k.nrows();
                    let sigma = &k * (&k * beta + DMatrix::identity(m, m));
                    let gp = GpState::from_parts(spec, model.dict().clone(), mu, sigma, q)?;
                    Some(general_alpha_update_oracle(&gp, x, y, None)?)
                };
                model.beta_update(x, y)?;
                if let Some(o) = oracle {
                    worst[0] = worst[0].max(max_diff(o.as_slice(), model.alpha()));
                }
            }

            let pool = stream_1d(&spec, 600 + s, 40)?;
            for m in 1..=pool.len() {
                let dict = Dictionary::from_points(pool.inputs[..m].to_vec())?;
                let k = gram_matrix(&spec, &dict)?;
                let q = inverse(&k)?;
                let sigma = &k * (&k * beta + DMatrix::identity(m, m));
                let residual = &q * sigma * &q - &q - DMatrix::identity(m, m) * beta;
                worst[1] = worst[1].max(inf_norm(&residual));
            }
        }
    }
    Ok(worst)
}

/// Runs every check. `cfg.tol` replaces all tolerances.
pub fn run_checks(cfg: &RunConfig) -> CliResult<Vec<Check>> {
    let spec = &cfg.spec;
    let seeds = cfg.seeds;
    let n = cfg.n.unwrap_or(500);
    let [ob_1d, ob_4d] = check_online_batch(spec, seeds)?;
    let [c_weights, c_cov] = check_identity_c(spec, seeds)?;
    let tol = |default: f64| cfg.tol.unwrap_or(default);
    Ok(vec![
        Check { name: "online-batch-1d", max_abs_diff: ob_1d, tolerance: tol(1e-8) },
        Check { name: "online-batch-4d", max_abs_diff: ob_4d, tolerance: tol(1e-8) },
        Check { name: "krls-weights", max_abs_diff: check_krls(spec, seeds)?, tolerance: tol(1e-8) },
        Check { name: "rank-one-inverse", max_abs_diff: check_rank_one(spec, seeds)?, tolerance: tol(1e-7) },
        Check { name: "identity-a", max_abs_diff: check_identity_a(spec, seeds, n)?, tolerance: tol(1e-12) },
        Check {
            name: "identity-b",
            max_abs_diff: check_identity_b(spec, seeds, n, cfg.noise_mismatch)?,
            tolerance: tol(1e-12),
        },
        Check { name: "identity-c", max_abs_diff: c_weights, tolerance: tol(1e-10) },
        Check { name: "identity-c-covariance", max_abs_diff: c_cov, tolerance: tol(1e-8) },
    ])
}

pub fn table(checks: &[Check]) -> String {
    let mut out = format!("{:<24}{:>14}{:>12}  result\n", "check", "max |diff|", "tolerance");
    for c in checks {
        let _ = writeln!(
            out,
            "{:<24}{:>14.3e}{:>12.0e}  {}",
            c.name,
            c.max_abs_diff,
            c.tolerance,
            if c.passed() { "pass" } else { "FAIL" }
        );
    }
    out
}

pub fn checks_csv(checks: &[Check]) -> String {
    let mut out = String::from("check,max_abs_diff,tolerance,passed\n");
    for c in checks {
        let _ = writeln!(out, "{},{},{},{}", c.name, c.max_abs_diff, c.tolerance, c.passed());
    }
    out
}
