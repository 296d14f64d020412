//! Synthetic data for the experiments and a CSV loader for real data.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{KafError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionSet {
    pub name: String,
    pub seed: u64,
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

impl RegressionSet {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.inputs.first().map(Vec::len)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.inputs.iter().map(Vec::as_slice).zip(self.targets.iter().copied())
    }

    /// The first `n` pairs (or all of them).
    pub fn prefix(&self, n: usize) -> RegressionSet {
        let n = n.min(self.len());
        RegressionSet {
            name: self.name.clone(),
            seed: self.seed,
            inputs: self.inputs[..n].to_vec(),
            targets: self.targets[..n].to_vec(),
        }
    }

    /// Rescales every input column to zero mean and unit population
    /// variance. Constant columns are only centred.
    pub fn standardize_inputs(&mut self) {
        let Some(d) = self.dim() else { return };
        let n = self.len() as f64;
        for j in 0..d {
            let mean = self.inputs.iter().map(|x| x[j]).sum::<f64>() / n;
            let var = self.inputs.iter().map(|x| (x[j] - mean).powi(2)).sum::<f64>() / n;
            let scale = if var > 0.0 { var.sqrt() } else { 1.0 };
            for x in &mut self.inputs {
                x[j] = (x[j] - mean) / scale;
            }
        }
    }

    /// Deterministic shuffle followed by a split into `n_train` and up to
    /// `n_test` pairs.
    pub fn shuffle_split(&self, seed: u64, n_train: usize, n_test: usize) -> Result<(RegressionSet, RegressionSet)> {
        if n_train == 0 || n_train >= self.len() {
            return Err(KafError::arg(format!(
                "cannot take {n_train} training points from a set of {}",
                self.len()
            )));
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Fisher-Yates
        for i in (1..order.len()).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
        let take = |idx: &[usize], suffix: &str| RegressionSet {
            name: format!("{}-{suffix}", self.name),
            seed,
            inputs: idx.iter().map(|&i| self.inputs[i].clone()).collect(),
            targets: idx.iter().map(|&i| self.targets[i]).collect(),
        };
        let test_end = (n_train + n_test).min(order.len());
        Ok((take(&order[..n_train], "train"), take(&order[n_train..test_end], "test")))
    }
}

/// Noise-free target of the kinematics-like generator: the sum over links of
/// `cos(π · (x_1 + … + x_j))`.
pub fn kinematics_target(x: &[f64]) -> f64 {
    let mut angle = 0.0;
    let mut total = 0.0;
    for xi in x {
        angle += xi * PI;
        total += angle.cos();
    }
    total
}

const KINEMATICS_NOISE_STD: f64 = 0.05;

/// Stand-in for a robot-arm kinematics benchmark: inputs uniform in
/// `[-1, 1]^d`, targets from [`kinematics_target`] plus N(0, 0.05²) noise.
pub fn gen_kinematics_like(seed: u64, n_train: usize, n_test: usize, d: usize) -> Result<(RegressionSet, RegressionSet)> {
    if n_train == 0 || n_test == 0 || d == 0 {
        return Err(KafError::arg("kinematics generator needs n_train, n_test, d >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, KINEMATICS_NOISE_STD).expect("valid std");
    let mut draw = |n: usize, suffix: &str| {
        let mut inputs = Vec::with_capacity(n);
        let mut targets = Vec::with_capacity(n);
        for _ in 0..n {
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..=1.0)).collect();
            targets.push(kinematics_target(&x) + noise.sample(&mut rng));
            inputs.push(x);
        }
        RegressionSet {
            name: format!("kin-like-{suffix}"),
            seed,
            inputs,
            targets,
        }
    };
    let train = draw(n_train, "train");
    let test = draw(n_test, "test");
    Ok((train, test))
}

/// Noisy samples of `sin(x)` on `[-5, 5]`, in random order. Used for
/// one-dimensional uncertainty traces.
pub fn gen_sine_1d(seed: u64, n: usize, noise_std: f64) -> RegressionSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inputs = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    for _ in 0..n {
        let x: f64 = rng.random_range(-5.0..5.0);
        let eps: f64 = rng.sample(StandardNormal);
        targets.push(x.sin() + noise_std * eps);
        inputs.push(vec![x]);
    }
    RegressionSet {
        name: "sine-1d".into(),
        seed,
        inputs,
        targets,
    }
}

/// Random regression stream for equivalence checks: inputs uniform in
/// `[-half_width, half_width]^dim`, redrawn until every input is at least
/// `min_separation` away from all earlier ones, and targets
/// `Σ_i sin(x_i)` plus N(0, 0.1²) noise.
///
/// The separation keeps Gram matrices well-conditioned; tightly clustered
/// inputs make the inverse-Gram recursion lose digits quickly.
pub fn gen_random_stream(
    seed: u64,
    n: usize,
    dim: usize,
    half_width: f64,
    min_separation: f64,
) -> Result<RegressionSet> {
    if dim == 0 || !(half_width > 0.0) {
        return Err(KafError::arg("random stream needs dim >= 1 and a positive width"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let min_sq = min_separation * min_separation;
    let mut inputs: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    let mut attempts = 0usize;
    while inputs.len() < n {
        attempts += 1;
        if attempts > 1000 * (n + 1) {
            return Err(KafError::arg(format!(
                "cannot place {n} points {min_separation} apart in the requested box"
            )));
        }
        let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-half_width..half_width)).collect();
        let crowded = inputs
            .iter()
            .any(|p| p.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() < min_sq);
        if crowded {
            continue;
        }
        let eps: f64 = rng.sample(StandardNormal);
        targets.push(x.iter().map(|v| v.sin()).sum::<f64>() + 0.1 * eps);
        inputs.push(x);
    }
    Ok(RegressionSet {
        name: format!("random-{dim}d"),
        seed,
        inputs,
        targets,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Nonlinearity {
    TanhSat,
}

impl Nonlinearity {
    fn apply(&self, v: f64) -> f64 {
        match self {
            Nonlinearity::TanhSat => v.tanh(),
        }
    }
}

/// What the regressor sees at time `t` in a switch scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SwitchInput {
    /// `[s_t, …, s_{t-embedding_dim+1}]`: the window of the source driving
    /// the channel (system identification).
    SourceWindow,
    /// `[v_{t-1}, …, v_{t-embedding_dim}]`: past outputs only.
    OutputHistory,
}

/// A linear FIR channel followed by a static nonlinearity whose channel is
/// swapped abruptly at `switch_at`.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchScenario {
    pub input: SwitchInput,
    pub n_total: usize,
    pub switch_at: usize,
    pub channel_a: Vec<f64>,
    pub channel_b: Vec<f64>,
    pub nonlinearity: Nonlinearity,
    pub noise_std: f64,
    pub embedding_dim: usize,
    pub seed: u64,
}

pub const DEFAULT_SWITCH_AT: usize = 500;
pub const DEFAULT_CHANNEL_LEN: usize = 4;
pub const DEFAULT_EMBEDDING_DIM: usize = 4;
pub const DEFAULT_SWITCH_NOISE_STD: f64 = 0.01;

impl SwitchScenario {
    /// Default scenario with both channels drawn from `seed`: i.i.d. standard
    /// normal taps scaled to unit energy.
    pub fn random(seed: u64, n_total: usize, switch_at: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        let channel_a = random_channel(&mut rng, DEFAULT_CHANNEL_LEN);
        let channel_b = random_channel(&mut rng, DEFAULT_CHANNEL_LEN);
        SwitchScenario {
            input: SwitchInput::SourceWindow,
            n_total,
            switch_at,
            channel_a,
            channel_b,
            nonlinearity: Nonlinearity::TanhSat,
            noise_std: DEFAULT_SWITCH_NOISE_STD,
            embedding_dim: DEFAULT_EMBEDDING_DIM,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_total == 0 || self.switch_at == 0 || self.switch_at >= self.n_total {
            return Err(KafError::arg(format!(
                "switch_at must lie in 1..{}, got {}",
                self.n_total, self.switch_at
            )));
        }
        if self.channel_a.is_empty() || self.channel_b.is_empty() {
            return Err(KafError::arg("channels must be non-empty"));
        }
        if self.embedding_dim == 0 {
            return Err(KafError::arg("embedding dimension must be positive"));
        }
        if !(self.noise_std >= 0.0) {
            return Err(KafError::arg("noise std must be non-negative"));
        }
        Ok(())
    }

    pub fn channel_at(&self, t: usize) -> Regime {
        if t < self.switch_at {
            Regime::A
        } else {
            Regime::B
        }
    }
}

fn random_channel(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    let taps: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
    let energy = taps.iter().map(|v| v * v).sum::<f64>().sqrt();
    taps.into_iter().map(|v| v / energy).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    A,
    B,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchSeries {
    /// Source window or output history, per [`SwitchInput`].
    pub inputs: Vec<Vec<f64>>,
    /// `targets[t] = v_t`
    pub targets: Vec<f64>,
    /// Channel that produced `v_t`.
    pub regime: Vec<Regime>,
}

impl SwitchSeries {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.inputs.iter().map(Vec::as_slice).zip(self.targets.iter().copied())
    }
}

/// Generates `n_total` prediction pairs from the scenario. The source is a
/// white standard-normal sequence; the series is
/// `v_t = nonlinearity((h * s)_t) + noise`, with `h` the active channel.
/// Sample times before 0 are a burn-in driven by channel A.
/// The target is always `v_t`; the input follows `scenario.input`.
pub fn gen_switch_series(scenario: &SwitchScenario) -> Result<SwitchSeries> {
    scenario.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let taps = scenario.channel_a.len().max(scenario.channel_b.len());
    let warmup = scenario.embedding_dim + taps;
    let len = warmup + scenario.n_total;
    let source: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
    let noise: Vec<f64> = (0..len).map(|_| rng.sample::<f64, _>(StandardNormal) * scenario.noise_std).collect();

    let mut v = vec![0.0; len];
    for (i, vi) in v.iter_mut().enumerate() {
        let t = i as isize - warmup as isize;
        let channel = if t >= scenario.switch_at as isize {
            &scenario.channel_b
        } else {
            &scenario.channel_a
        };
        let c: f64 = channel
            .iter()
            .enumerate()
            .filter(|(j, _)| *j <= i)
            .map(|(j, h)| h * source[i - j])
            .sum();
        *vi = scenario.nonlinearity.apply(c) + noise[i];
    }

    let mut series = SwitchSeries {
        inputs: Vec::with_capacity(scenario.n_total),
        targets: Vec::with_capacity(scenario.n_total),
        regime: Vec::with_capacity(scenario.n_total),
    };
    for t in 0..scenario.n_total {
        let i = warmup + t;
        let x = match scenario.input {
            SwitchInput::OutputHistory => (1..=scenario.embedding_dim).map(|lag| v[i - lag]).collect(),
            SwitchInput::SourceWindow => (0..scenario.embedding_dim).map(|lag| source[i - lag]).collect(),
        };
        series.inputs.push(x);
        series.targets.push(v[i]);
        series.regime.push(scenario.channel_at(t));
    }
    Ok(series)
}

/// Reads `x_1,…,x_d,y` rows. `header` skips the first line.
pub fn load_csv(path: &Path, d: usize, header: bool) -> Result<RegressionSet> {
    if d == 0 {
        return Err(KafError::arg("input dimension must be positive"));
    }
    let file = std::fs::File::open(path).map_err(|source| KafError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(header)
        .flexible(true)
        .from_reader(file);
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1 + usize::from(header);
        let record = record.map_err(|e| KafError::Parse { row, message: e.to_string() })?;
        if record.len() != d + 1 {
            return Err(KafError::Parse {
                row,
                message: format!("expected {} fields, found {}", d + 1, record.len()),
            });
        }
        let values = record
            .iter()
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| KafError::Parse { row, message: format!("non-numeric field: {e}") })?;
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(KafError::Parse { row, message: format!("non-finite value {v}") });
        }
        targets.push(values[d]);
        inputs.push(values[..d].to_vec());
    }
    Ok(RegressionSet {
        name: path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "csv".into()),
        seed: 0,
        inputs,
        targets,
    })
}
