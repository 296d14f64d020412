//! Metrics and experiment runners: learning curves on stationary data,
//! multi-seed reconvergence after a channel switch, and predictive
//! uncertainty traces on one-dimensional data.

use rayon::prelude::*;

use crate::batch::batch_fit;
use crate::datasets::{gen_switch_series, RegressionSet, SwitchScenario};
use crate::error::{KafError, Result};
use crate::kernel::{Dictionary, KernelSpec};
use crate::klms::{KlmsState, KlmsVariant, StepSize};
use crate::model::OnlineRegressor;
use crate::online_gp::GpState;

/// Admission threshold used for "no pruning" GP runs.
pub const NO_PRUNING_THRESHOLD: f64 = 1e-12;

/// `10·log10(mean((ŷ − y)²) / var(y))` with population variance.
/// A perfect fit gives `-inf`.
pub fn nmse_db(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.len() != targets.len() || targets.is_empty() {
        return Err(KafError::arg(format!(
            "nmse needs equal non-zero lengths, got {} and {}",
            predictions.len(),
            targets.len()
        )));
    }
    let n = targets.len() as f64;
    let mean = targets.iter().sum::<f64>() / n;
    let var = targets.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
    if !(var > 0.0) {
        return Err(KafError::arg("targets have zero variance"));
    }
    let mse = predictions
        .iter()
        .zip(targets)
        .map(|(p, y)| (p - y).powi(2))
        .sum::<f64>()
        / n;
    Ok(10.0 * (mse / var).log10())
}

/// Model recipe; turned into a fresh model with [`Algorithm::build`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Algorithm {
    Gp { budget: Option<usize>, admission_threshold: f64 },
    Klms { eta: StepSize },
    Qklms { eta: StepSize, quant_radius: f64 },
    /// `eps_reg = None` uses the kernel's noise variance.
    Knlms { eta: f64, eps_reg: Option<f64>, coherence_mu0: f64 },
    Beta { beta: f64, coherence_mu0: Option<f64> },
}

impl Algorithm {
    pub fn exact_gp() -> Self {
        Algorithm::Gp { budget: None, admission_threshold: NO_PRUNING_THRESHOLD }
    }

    pub fn beta(beta: f64) -> Self {
        Algorithm::Beta { beta, coherence_mu0: None }
    }

    /// KNLMS with η = 1, ε = σ_n² and no sparsification.
    pub fn knlms_default() -> Self {
        Algorithm::Knlms { eta: 1.0, eps_reg: None, coherence_mu0: 1.0 }
    }

    pub fn label(&self) -> String {
        match *self {
            Algorithm::Gp { budget: None, .. } => "gp".into(),
            Algorithm::Gp { budget: Some(b), .. } => format!("gp:{b}"),
            Algorithm::Klms { eta: StepSize::NoiseMatched } => "klms".into(),
            Algorithm::Klms { eta: StepSize::Fixed(eta) } => format!("klms:{eta}"),
            Algorithm::Qklms { quant_radius, .. } => format!("qklms:{quant_radius}"),
            Algorithm::Knlms { coherence_mu0, .. } if coherence_mu0 >= 1.0 => "knlms".into(),
            Algorithm::Knlms { coherence_mu0, .. } => format!("knlms:{coherence_mu0}"),
            Algorithm::Beta { beta, .. } => format!("beta:{beta}"),
        }
    }

    pub fn build(&self, spec: &KernelSpec) -> Result<Box<dyn OnlineRegressor>> {
        let spec = *spec;
        Ok(match *self {
            Algorithm::Gp { budget, admission_threshold } => {
                Box::new(GpState::new(spec, budget, admission_threshold)?)
            }
            Algorithm::Klms { eta } => Box::new(KlmsState::type1(spec, eta)?),
            Algorithm::Qklms { eta, quant_radius } => Box::new(KlmsState::qklms(spec, eta, quant_radius)?),
            Algorithm::Knlms { eta, eps_reg, coherence_mu0 } => Box::new(KlmsState::knlms(
                spec,
                eta,
                eps_reg.unwrap_or(spec.noise_variance),
                coherence_mu0,
            )?),
            Algorithm::Beta { beta, coherence_mu0 } => {
                Box::new(KlmsState::new(spec, KlmsVariant::Beta { beta, coherence_mu0 })?)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearningCurve {
    pub algorithm: String,
    /// `(samples processed, test NMSE in dB)`, steps strictly increasing.
    pub points: Vec<(usize, f64)>,
}

fn predict_all(model: &dyn OnlineRegressor, set: &RegressionSet) -> Result<Vec<f64>> {
    set.inputs.iter().map(|x| model.predict_mean(x)).collect()
}

/// Streams `train` through `model`, scoring the whole test set after every
/// `eval_every` samples and after the last one.
pub fn run_online_experiment(
    model: &mut dyn OnlineRegressor,
    train: &RegressionSet,
    test: &RegressionSet,
    eval_every: usize,
) -> Result<LearningCurve> {
    if eval_every == 0 {
        return Err(KafError::arg("eval_every must be positive"));
    }
    if test.is_empty() {
        return Err(KafError::arg("test set is empty"));
    }
    let mut points = Vec::new();
    let n = train.len();
    for (t, (x, y)) in train.iter().enumerate() {
        model.update(x, y)?;
        let step = t + 1;
        if step % eval_every == 0 || step == n {
            let preds = predict_all(model, test)?;
            points.push((step, nmse_db(&preds, &test.targets)?));
        }
    }
    Ok(LearningCurve { algorithm: model.name(), points })
}

/// One learning curve per algorithm on shared data. Curves are labelled
/// with [`Algorithm::label`] and returned in input order.
pub fn run_comparison(
    algorithms: &[Algorithm],
    spec: &KernelSpec,
    train: &RegressionSet,
    test: &RegressionSet,
    eval_every: usize,
) -> Result<Vec<LearningCurve>> {
    algorithms
        .par_iter()
        .map(|alg| {
            let mut model = alg.build(spec)?;
            let mut curve = run_online_experiment(model.as_mut(), train, test, eval_every)?;
            curve.algorithm = alg.label();
            Ok(curve)
        })
        .collect()
}

/// Pointwise mean (in dB) of same-shaped curves from several replicates.
pub fn average_curves(replicates: &[Vec<LearningCurve>]) -> Result<Vec<LearningCurve>> {
    let first = replicates
        .first()
        .ok_or_else(|| KafError::arg("no replicates to average"))?;
    let n = replicates.len() as f64;
    first
        .iter()
        .enumerate()
        .map(|(a, curve)| {
            let points = curve
                .points
                .iter()
                .enumerate()
                .map(|(p, &(step, _))| {
                    let mut total = 0.0;
                    for rep in replicates {
                        let other = rep.get(a).and_then(|c| c.points.get(p));
                        match other {
                            Some(&(s, v)) if s == step => total += v,
                            _ => return Err(KafError::arg("replicate curves differ in shape")),
                        }
                    }
                    Ok((step, total / n))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(LearningCurve { algorithm: curve.algorithm.clone(), points })
        })
        .collect()
}

/// Seed-averaged squared prediction errors of one algorithm.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconvergenceCurve {
    pub algorithm: String,
    /// `mean over seeds of e_t²`, linear units, one entry per step.
    pub mean_sq_error: Vec<f64>,
}

impl ReconvergenceCurve {
    /// Mean of `mean_sq_error` over the inclusive step range `[from, to]`.
    pub fn window_mean(&self, from: usize, to: usize) -> f64 {
        let to = to.min(self.mean_sq_error.len() - 1);
        let w = &self.mean_sq_error[from..=to];
        w.iter().sum::<f64>() / w.len() as f64
    }

    /// Trailing moving average over `window` steps, in dB. A window of 1
    /// gives the raw curve.
    pub fn smoothed_db(&self, window: usize) -> Vec<f64> {
        let window = window.max(1);
        (0..self.mean_sq_error.len())
            .map(|t| {
                let w = &self.mean_sq_error[(t + 1).saturating_sub(window)..=t];
                10.0 * (w.iter().sum::<f64>() / w.len() as f64).log10()
            })
            .collect()
    }
}

impl SwitchScenario {
    /// Same scenario shape with both channels redrawn from `seed`.
    pub fn reseeded(&self, seed: u64) -> SwitchScenario {
        let fresh = SwitchScenario::random(seed, self.n_total, self.switch_at);
        SwitchScenario {
            channel_a: fresh.channel_a,
            channel_b: fresh.channel_b,
            seed,
            ..self.clone()
        }
    }
}

/// Runs every algorithm on `n_seeds` replicates of the switch scenario
/// (replicate `s` uses seed `scenario.seed + s` with fresh channels) and
/// averages the instantaneous squared errors per step.
pub fn run_reconvergence(
    scenario: &SwitchScenario,
    algorithms: &[Algorithm],
    spec: &KernelSpec,
    n_seeds: usize,
) -> Result<Vec<ReconvergenceCurve>> {
    if n_seeds == 0 {
        return Err(KafError::arg("need at least one seed"));
    }
    scenario.validate()?;
    let jobs: Vec<(usize, usize)> = (0..algorithms.len())
        .flat_map(|a| (0..n_seeds).map(move |s| (a, s)))
        .collect();
    let errors: Vec<Vec<f64>> = jobs
        .par_iter()
        .map(|&(a, s)| {
            let series = gen_switch_series(&scenario.reseeded(scenario.seed + s as u64))?;
            let mut model = algorithms[a].build(spec)?;
            let mut out = Vec::with_capacity(series.len());
            for (x, y) in series.iter() {
                let e = y - model.predict_mean(x)?;
                out.push(e * e);
                model.update(x, y)?;
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(algorithms
        .iter()
        .enumerate()
        .map(|(a, alg)| {
            let mut mean = vec![0.0; scenario.n_total];
            for s in 0..n_seeds {
                for (m, e) in mean.iter_mut().zip(&errors[a * n_seeds + s]) {
                    *m += e;
                }
            }
            mean.iter_mut().for_each(|m| *m /= n_seeds as f64);
            ReconvergenceCurve { algorithm: alg.label(), mean_sq_error: mean }
        })
        .collect())
}

/// Predictive mean and output standard deviation of one model over a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyTrace {
    pub algorithm: String,
    pub prefix: usize,
    pub grid: Vec<f64>,
    /// Shared GP predictive mean.
    pub mean: Vec<f64>,
    /// `σ_y` of this model.
    pub std: Vec<f64>,
}

/// Default observation counts for uncertainty traces.
pub const DEFAULT_PREFIXES: [usize; 3] = [3, 8, 25];

/// For each prefix of the 1-D `data`, fits the exact online GP and the β = 0
/// and β = 1 models and reports each model's `σ_y` on `grid`. All three
/// traces carry the GP mean.
pub fn run_uncertainty_trace(
    data: &RegressionSet,
    prefixes: &[usize],
    grid: &[f64],
    spec: &KernelSpec,
) -> Result<Vec<UncertaintyTrace>> {
    if grid.is_empty() {
        return Err(KafError::arg("uncertainty grid is empty"));
    }
    if data.dim().is_some_and(|d| d != 1) {
        return Err(KafError::arg("uncertainty traces need one-dimensional inputs"));
    }
    let mut traces = Vec::new();
    for &n in prefixes {
        let prefix = data.prefix(n);
        let mut gp = GpState::new(*spec, None, NO_PRUNING_THRESHOLD)?;
        let mut beta0 = KlmsState::beta(*spec, 0.0)?;
        let mut beta1 = KlmsState::beta(*spec, 1.0)?;
        for (x, y) in prefix.iter() {
            gp.update(x, y)?;
            beta0.beta_update(x, y)?;
            beta1.beta_update(x, y)?;
        }
        let mut mean = Vec::with_capacity(grid.len());
        let mut gp_std = Vec::with_capacity(grid.len());
        let mut b0_std = Vec::with_capacity(grid.len());
        let mut b1_std = Vec::with_capacity(grid.len());
        for &g in grid {
            let p = gp.predict(&[g])?;
            mean.push(p.mean);
            gp_std.push(p.output_std());
            b0_std.push(beta0.beta_variance(&[g])?.1.sqrt());
            b1_std.push(beta1.beta_variance(&[g])?.1.sqrt());
        }
        for (name, std) in [("gp", gp_std), ("beta:0", b0_std), ("beta:1", b1_std)] {
            traces.push(UncertaintyTrace {
                algorithm: name.into(),
                prefix: prefix.len(),
                grid: grid.to_vec(),
                mean: mean.clone(),
                std,
            });
        }
    }
    Ok(traces)
}

/// Picks the candidate kernel whose batch GP scores the lowest NMSE on
/// `validation` after fitting `train`.
pub fn grid_search(
    candidates: &[KernelSpec],
    train: &RegressionSet,
    validation: &RegressionSet,
) -> Result<(KernelSpec, f64)> {
    let dict = Dictionary::from_points(train.inputs.clone())?;
    let scored = candidates
        .par_iter()
        .map(|spec| {
            let fit = batch_fit(spec, &dict, &train.targets)?;
            let preds = validation
                .inputs
                .iter()
                .map(|x| fit.predict(x).map(|p| p.mean))
                .collect::<Result<Vec<_>>>()?;
            Ok((*spec, nmse_db(&preds, &validation.targets)?))
        })
        .collect::<Result<Vec<_>>>()?;
    scored
        .into_iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| KafError::arg("no candidate kernels"))
}
