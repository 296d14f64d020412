//! Acceptance suite. Each criterion prints one pass/fail line; the process
//! fails if any criterion fails.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use kafgp::datasets::{gen_kinematics_like, gen_random_stream, gen_sine_1d, RegressionSet};
use kafgp::evaluation::{
    grid_search, run_comparison, run_reconvergence, run_uncertainty_trace, Algorithm, NO_PRUNING_THRESHOLD,
};
use kafgp::online_gp::{gp_predict, gp_update};
use kafgp::{
    batch_fit, batch_predict, general_alpha_update_oracle, Dictionary, GpState, KernelSpec, KlmsState, StepSize,
    UpdateOutcome,
};
use kafgp_cli::{CommandKind, Flags, RunConfig};

type Outcome = Result<String, String>;

// Test-side oracles, written against the textbook formulas only.

fn kernel(spec: &KernelSpec, a: &[f64], b: &[f64]) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    spec.signal_variance * (-d2 / (2.0 * spec.lengthscale * spec.lengthscale)).exp()
}

fn gram(spec: &KernelSpec, pts: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(pts.len(), pts.len(), |i, j| kernel(spec, &pts[i], &pts[j]))
}

fn inverse(m: DMatrix<f64>) -> DMatrix<f64> {
    m.try_inverse().expect("invertible")
}

fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit_s: u64) -> bool {
    elapsed < Duration::from_secs(limit_s)
}

/// 1-D streams are spread out with a minimum gap so their Gram matrices stay
/// well conditioned; 4-D uniform draws are naturally well spread.
fn stream_1d(seed: u64, n: usize) -> RegressionSet {
    gen_random_stream(seed, n, 1, 100.0, 0.5).unwrap()
}

fn stream_4d(seed: u64, n: usize) -> RegressionSet {
    gen_random_stream(seed, n, 4, 5.0, 0.0).unwrap()
}

fn base_spec() -> KernelSpec {
    KernelSpec::gaussian(1.0, 1.0, 0.1)
}

fn online_batch_equivalence() -> Outcome {
    let start = Instant::now();
    let spec = base_spec();
    let (mut mean_diff, mut var_diff) = (0.0f64, 0.0f64);
    for seed in 0..5u64 {
        for (data, grid) in [
            (
                stream_1d(seed, 200),
                (0..100).map(|i| vec![-100.0 + 200.0 * i as f64 / 99.0]).collect::<Vec<_>>(),
            ),
            (stream_4d(seed, 200), {
                let mut rng = ChaCha8Rng::seed_from_u64(seed + 77);
                (0..100)
                    .map(|_| (0..4).map(|_| rng.random_range(-5.0..5.0)).collect())
                    .collect()
            }),
        ] {
            let mut gp = GpState::new(spec, None, NO_PRUNING_THRESHOLD).unwrap();
            for (x, y) in data.iter() {
                gp_update(&mut gp, x, y).unwrap();
            }
            let dict = Dictionary::from_points(data.inputs.clone()).unwrap();
            let fit = batch_fit(&spec, &dict, &data.targets).unwrap();
            for g in &grid {
                let a = gp_predict(&gp, g).unwrap();
                let b = batch_predict(&fit, g).unwrap();
                mean_diff = mean_diff.max((a.mean - b.mean).abs());
                var_diff = var_diff
                    .max((a.output_variance - b.output_variance).abs())
                    .max((a.latent_variance - b.latent_variance).abs());
            }
        }
    }
    let t = start.elapsed();
    check(
        mean_diff < 1e-8 && var_diff < 1e-8 && within(t, 30),
        format!("max mean diff {mean_diff:.2e}, max variance diff {var_diff:.2e}, {:.1?}", t),
    )
}

fn krls_bridge() -> Outcome {
    let spec = base_spec();
    let data = stream_4d(11, 100);
    let mut gp = GpState::new(spec, None, NO_PRUNING_THRESHOLD).unwrap();
    let mut worst = 0.0f64;
    for t in 0..data.len() {
        gp_update(&mut gp, &data.inputs[t], data.targets[t]).unwrap();
        let pts = &data.inputs[..=t];
        let k = gram(&spec, pts) + DMatrix::identity(t + 1, t + 1) * spec.noise_variance;
        let direct = inverse(k) * DVector::from_column_slice(&data.targets[..=t]);
        let qmu = gp.q_inv() * gp.mu();
        worst = worst.max(max_abs_diff(qmu.as_slice(), direct.as_slice()));
    }
    check(worst < 1e-8, format!("max |Qμ − (K+σ_n²I)⁻¹y| = {worst:.2e} over 100 steps"))
}

fn identity_a() -> Outcome {
    let spec = base_spec();
    let mut worst = 0.0f64;
    for seed in 0..3u64 {
        let data = stream_4d(100 + seed, 500);
        let mut beta = KlmsState::beta(spec, 0.0).unwrap();
        let eta = 1.0 / (spec.noise_variance + spec.signal_variance);
        let mut klms = KlmsState::type1(spec, StepSize::Fixed(eta)).unwrap();
        for (x, y) in data.iter() {
            beta.beta_update(x, y).unwrap();
            klms.type1_update(x, y).unwrap();
            worst = worst.max(max_abs_diff(beta.alpha(), klms.alpha()));
        }
    }
    check(worst <= 1e-12, format!("max weight diff {worst:.2e} (3 seeds × 500 steps)"))
}

fn identity_b() -> Outcome {
    let spec = base_spec();
    assert_eq!(spec.signal_variance, 1.0);
    let mut worst = 0.0f64;
    for seed in 0..3u64 {
        let data = stream_4d(200 + seed, 500);
        let mut beta = KlmsState::beta(spec, 1.0).unwrap();
        let mut knlms = KlmsState::knlms(spec, 1.0, spec.noise_variance, 1.0).unwrap();
        for (x, y) in data.iter() {
            beta.beta_update(x, y).unwrap();
            knlms.knlms_update(x, y).unwrap();
            worst = worst.max(max_abs_diff(beta.alpha(), knlms.alpha()));
        }
    }
    check(worst <= 1e-12, format!("max weight diff {worst:.2e} (3 seeds × 500 steps)"))
}

fn identity_c() -> Outcome {
    let spec = base_spec().with_jitter(0.0);
    let (mut step_diff, mut cov_residual) = (0.0f64, 0.0f64);
    for &beta in &[0.0, 0.25, 1.0, 2.0] {
        let data = stream_1d(300, 30);
        let mut model = KlmsState::beta(spec, beta).unwrap();
        for (x, y) in data.iter() {
            let m = model.len();
            let oracle = (m > 0).then(|| {
                let k = gram(&spec, model.dict().points());
                let q = inverse(k.clone());
                let mu = &k * DVector::from_column_slice(model.alpha());
                let sigma = &k * (&k * beta + DMatrix::identity(m, m));
                let gp = GpState::from_parts(spec, model.dict().clone(), mu, sigma, q).unwrap();
                general_alpha_update_oracle(&gp, x, y, None).unwrap()
            });
            model.beta_update(x, y).unwrap();
            if let Some(o) = oracle {
                step_diff = step_diff.max(max_abs_diff(o.as_slice(), model.alpha()));
            }
        }
        let pool = stream_1d(301, 40);
        for m in 1..=40 {
            let k = gram(&spec, &pool.inputs[..m]);
            let q = inverse(k.clone());
            let sigma = &k * (&k * beta + DMatrix::identity(m, m));
            let r = &q * sigma * &q - &q - DMatrix::identity(m, m) * beta;
            cov_residual = cov_residual.max(inf_norm(&r));
        }
    }
    check(
        step_diff < 1e-10 && cov_residual < 1e-8,
        format!("max per-step weight diff {step_diff:.2e}, max ‖QΣQ − Q − βI‖∞ {cov_residual:.2e}"),
    )
}

fn uncertainty_behavior() -> Outcome {
    let spec = base_spec();
    let data = gen_sine_1d(0, 25, 0.1);
    let observed: Vec<f64> = data.inputs.iter().map(|x| x[0]).collect();
    let mut grid: Vec<f64> = (0..121).map(|i| -6.0 + 0.1 * i as f64).collect();
    grid.extend(&observed);
    let traces = run_uncertainty_trace(&data, &[3, 8, 25], &grid, &spec).unwrap();
    let std_of = |alg: &str, prefix: usize| -> &Vec<f64> {
        &traces.iter().find(|t| t.algorithm == alg && t.prefix == prefix).unwrap().std
    };
    let prior = (spec.noise_variance + spec.signal_variance).sqrt();
    let at = |i: usize| 121 + i;
    let mut failures = Vec::new();

    // (a)
    for &p in &[3, 8, 25] {
        if !(0..p).all(|i| std_of("gp", p)[at(i)] < prior) {
            failures.push(format!("gp σ_y not below prior at observed inputs (prefix {p})"));
        }
    }
    for (lo, hi) in [(3, 8), (8, 25)] {
        if !(0..lo).all(|i| std_of("gp", hi)[at(i)] <= std_of("gp", lo)[at(i)]) {
            failures.push(format!("gp σ_y grew at observed inputs from prefix {lo} to {hi}"));
        }
    }
    // (b)
    let b0_dev = [3, 8, 25]
        .iter()
        .flat_map(|&p| std_of("beta:0", p).iter().map(|s| (s - prior).abs()))
        .fold(0.0f64, f64::max);
    if b0_dev > 1e-12 {
        failures.push(format!("β=0 σ_y deviates from the prior by {b0_dev:.2e}"));
    }
    // (c)
    if ![3, 8, 25].iter().all(|&p| std_of("beta:1", p).iter().all(|&s| s >= prior)) {
        failures.push("β=1 σ_y below the prior".into());
    }
    for (lo, hi) in [(3, 8), (8, 25)] {
        let (a, b) = (std_of("beta:1", lo), std_of("beta:1", hi));
        if !a.iter().zip(b).all(|(x, y)| y >= x) {
            failures.push(format!("β=1 σ_y decreased from prefix {lo} to {hi}"));
        }
    }
    check(
        failures.is_empty(),
        if failures.is_empty() {
            format!("GP contracts at data, β=0 flat (max dev {b0_dev:.1e}), β=1 grows")
        } else {
            failures.join("; ")
        },
    )
}

/// Kernel chosen by batch-GP validation NMSE on an independent draw, with a
/// unit signal variance so that β = 1 and KNLMS coincide.
fn tuned_kin_spec() -> KernelSpec {
    let (train, valid) = gen_kinematics_like(1000, 1000, 500, 8).unwrap();
    let candidates: Vec<KernelSpec> = [0.25, 0.5, 0.75, 1.0]
        .iter()
        .flat_map(|&l| [0.01, 0.1, 0.5, 1.0].map(|n| KernelSpec::gaussian(l, 1.0, n)))
        .collect();
    grid_search(&candidates, &train, &valid).unwrap().0
}

fn stationary_ordering() -> Outcome {
    let start = Instant::now();
    let spec = tuned_kin_spec();
    let algs = [Algorithm::exact_gp(), Algorithm::beta(0.0), Algorithm::beta(1.0), Algorithm::knlms_default()];
    let mut failures = Vec::new();
    let mut finals = Vec::new();
    let mut worst_gap = 0.0f64;
    for seed in 0..3u64 {
        let (train, test) = gen_kinematics_like(seed, 1000, 1000, 8).unwrap();
        let curves = run_comparison(&algs, &spec, &train, &test, 100).unwrap();
        let last = |i: usize| curves[i].points.last().unwrap().1;
        let (gp, b0, b1) = (last(0), last(1), last(2));
        finals.push(format!("seed {seed}: gp {gp:.2}, β0 {b0:.2}, β1 {b1:.2} dB"));
        if !(gp <= b1 && gp <= b0) {
            failures.push(format!("seed {seed}: GP not best (gp {gp:.3}, β0 {b0:.3}, β1 {b1:.3})"));
        }
        for (p, q) in curves[2].points.iter().zip(&curves[3].points) {
            assert_eq!(p.0, q.0);
            worst_gap = worst_gap.max((p.1 - q.1).abs());
        }
    }
    if worst_gap > 0.5 {
        failures.push(format!("β=1 vs KNLMS gap {worst_gap:.3} dB"));
    }
    let t = start.elapsed();
    if !within(t, 120) {
        failures.push(format!("took {t:.1?}"));
    }
    let kernel = format!(
        "ℓ={}, σ_n²={}",
        spec.lengthscale, spec.noise_variance
    );
    check(
        failures.is_empty(),
        if failures.is_empty() {
            format!("{kernel}; {}; max β1/KNLMS gap {worst_gap:.1e} dB; {t:.1?}", finals.join("; "))
        } else {
            format!("{kernel}; {}", failures.join("; "))
        },
    )
}

fn reconvergence() -> Outcome {
    let start = Instant::now();
    let cfg = RunConfig::resolve(CommandKind::Reconverge, &Flags::default()).unwrap();
    assert_eq!(cfg.seeds, 5);
    let scenario = kafgp_cli::commands::switch_scenario(&cfg).unwrap();
    assert_eq!(scenario.switch_at, 500);
    let curves = run_reconvergence(&scenario, &cfg.algorithms, &cfg.spec, cfg.seeds).unwrap();
    let mut failures = Vec::new();
    let mut summary = Vec::new();
    for c in &curves {
        let pre = c.window_mean(450, 499);
        let spike = c.window_mean(500, 510);
        let early = c.window_mean(500, 600);
        let late = c.window_mean(900, 1000);
        summary.push(format!("{} {spike:.3}>{pre:.3}, {late:.3}<{early:.3}", c.algorithm));
        if !(spike > pre) {
            failures.push(format!("{}: no spike ({spike:.4} vs {pre:.4})", c.algorithm));
        }
        if !(late < early) {
            failures.push(format!("{}: no reconvergence ({late:.4} vs {early:.4})", c.algorithm));
        }
    }
    let t = start.elapsed();
    if !within(t, 60) {
        failures.push(format!("took {t:.1?}"));
    }
    check(
        failures.is_empty(),
        if failures.is_empty() {
            format!("{}; {t:.1?}", summary.join("; "))
        } else {
            failures.join("; ")
        },
    )
}

fn rank_one_inverse() -> Outcome {
    let spec = base_spec();
    let data = stream_4d(400, 100);
    let mut gp = GpState::new(spec, None, NO_PRUNING_THRESHOLD).unwrap();
    let (mut worst, mut admitted) = (0.0f64, 0);
    for (x, y) in data.iter() {
        if gp_update(&mut gp, x, y).unwrap().0 == UpdateOutcome::Admitted {
            admitted += 1;
            let m = gp.len();
            let k = gram(&spec, gp.dict().points()) + DMatrix::identity(m, m) * spec.jitter;
            worst = worst.max(inf_norm(&(gp.q_inv() * k - DMatrix::identity(m, m))));
        }
    }
    check(
        worst < 1e-7 && admitted == 100,
        format!("max ‖QK − I‖∞ {worst:.2e} over {admitted} admitted points"),
    )
}

fn run_cli(args: &[&str], out: &Path) {
    let status = Command::new(env!("CARGO_BIN_EXE_kafgp"))
        .args(args)
        .arg("--out")
        .arg(out)
        .arg("--dump-state")
        .output()
        .expect("binary runs");
    assert!(status.status.success(), "{args:?}: {}", String::from_utf8_lossy(&status.stderr));
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn determinism() -> Outcome {
    let commands: [&[&str]; 4] = [
        &["compare", "--algs", "gp,beta:0,beta:1,klms,knlms,qklms", "--seeds", "2", "--n", "300"],
        &["reconverge", "--seeds", "2"],
        &["uncertainty"],
        &["verify"],
    ];
    let mut compared = 0;
    for args in commands {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        run_cli(args, a.path());
        run_cli(args, b.path());
        let (fa, fb) = (read_dir_sorted(a.path()), read_dir_sorted(b.path()));
        if fa.is_empty() || fa != fb {
            return Err(format!("`{}` produced different files", args[0]));
        }
        compared += fa.len();
    }
    Ok(format!("4 commands, {compared} output files byte-identical across reruns"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("online/batch GP equivalence", online_batch_equivalence),
        ("KRLS weights", krls_bridge),
        ("identity A (β=0 vs KLMS)", identity_a),
        ("identity B (β=1 vs KNLMS)", identity_b),
        ("identity C (planted covariance)", identity_c),
        ("predictive uncertainty behavior", uncertainty_behavior),
        ("stationary ordering", stationary_ordering),
        ("reconvergence after switch", reconvergence),
        ("rank-one inverse update", rank_one_inverse),
        ("CLI determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
