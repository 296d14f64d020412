//! The KLMS family: type-I KLMS, QKLMS, type-II KNLMS and β-KLMS.
//!
//! All variants predict with `ŷ = αᵀk(dict, x)` and compute the error
//! `e = y − ŷ` before touching the state. They differ in which weights
//! absorb the correction.

use nalgebra::{DMatrix, DVector};

use crate::error::{KafError, Result};
use crate::kernel::{kernel_vector, Dictionary, KernelSpec};
use crate::model::{OnlineRegressor, PredictiveDistribution};
use crate::online_gp::GpState;

/// Learning rate for type-I KLMS and QKLMS.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSize {
    Fixed(f64),
    /// `η_t = 1 / (σ_n² + k(x_t, x_t))`.
    NoiseMatched,
}

impl StepSize {
    fn at(&self, spec: &KernelSpec, k_ss: f64) -> f64 {
        match *self {
            StepSize::Fixed(eta) => eta,
            StepSize::NoiseMatched => 1.0 / (spec.noise_variance + k_ss),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KlmsVariant {
    /// Grows by one weight `η e` per sample.
    TypeI { eta: StepSize },
    /// Type-I, but inputs within `quant_radius` of a stored point update
    /// that point's weight instead of growing.
    Qklms { eta: StepSize, quant_radius: f64 },
    /// Normalized update of every weight; admits inputs whose maximum kernel
    /// value against the dictionary is at most `coherence_mu0 · k**`.
    Knlms { eta: f64, eps_reg: f64, coherence_mu0: f64 },
    /// Update implied by the posterior covariance model `Σ = K(βK + I)`.
    /// `coherence_mu0 = None` is the evergrowing form.
    Beta { beta: f64, coherence_mu0: Option<f64> },
}

impl KlmsVariant {
    pub fn kind(&self) -> &'static str {
        match self {
            KlmsVariant::TypeI { .. } => "klms",
            KlmsVariant::Qklms { .. } => "qklms",
            KlmsVariant::Knlms { .. } => "knlms",
            KlmsVariant::Beta { .. } => "beta",
        }
    }

    fn validate(&self) -> Result<()> {
        let step_ok = |s: &StepSize| match *s {
            StepSize::Fixed(eta) => eta > 0.0 && eta.is_finite(),
            StepSize::NoiseMatched => true,
        };
        let coherence_ok = |m: f64| (0.0..=1.0).contains(&m);
        let ok = match self {
            KlmsVariant::TypeI { eta } => step_ok(eta),
            KlmsVariant::Qklms { eta, quant_radius } => step_ok(eta) && *quant_radius >= 0.0,
            KlmsVariant::Knlms { eta, eps_reg, coherence_mu0 } => {
                *eta > 0.0 && eta.is_finite() && *eps_reg >= 0.0 && coherence_ok(*coherence_mu0)
            }
            KlmsVariant::Beta { beta, coherence_mu0 } => {
                *beta >= 0.0 && beta.is_finite() && coherence_mu0.is_none_or(coherence_ok)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(KafError::arg(format!("invalid parameters for {self:?}")))
        }
    }
}

#[derive(Debug, Clone)]
pub struct KlmsState {
    spec: KernelSpec,
    variant: KlmsVariant,
    dict: Dictionary,
    alpha: Vec<f64>,
}

impl KlmsState {
    pub fn new(spec: KernelSpec, variant: KlmsVariant) -> Result<Self> {
        spec.validate()?;
        variant.validate()?;
        Ok(KlmsState {
            spec,
            variant,
            dict: Dictionary::new(),
            alpha: Vec::new(),
        })
    }

    pub fn type1(spec: KernelSpec, eta: StepSize) -> Result<Self> {
        Self::new(spec, KlmsVariant::TypeI { eta })
    }

    pub fn qklms(spec: KernelSpec, eta: StepSize, quant_radius: f64) -> Result<Self> {
        Self::new(spec, KlmsVariant::Qklms { eta, quant_radius })
    }

    pub fn knlms(spec: KernelSpec, eta: f64, eps_reg: f64, coherence_mu0: f64) -> Result<Self> {
        Self::new(spec, KlmsVariant::Knlms { eta, eps_reg, coherence_mu0 })
    }

    pub fn beta(spec: KernelSpec, beta: f64) -> Result<Self> {
        Self::new(spec, KlmsVariant::Beta { beta, coherence_mu0: None })
    }

    pub(crate) fn restore(spec: KernelSpec, variant: KlmsVariant, dict: Dictionary, alpha: Vec<f64>) -> Result<Self> {
        let mut s = Self::new(spec, variant)?;
        if alpha.len() != dict.len() {
            return Err(KafError::arg("weights do not match dictionary"));
        }
        s.dict = dict;
        s.alpha = alpha;
        Ok(s)
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }
    pub fn variant(&self) -> &KlmsVariant {
        &self.variant
    }
    pub fn dict(&self) -> &Dictionary {
        &self.dict
    }
    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }
    pub fn len(&self) -> usize {
        self.dict.len()
    }
    pub fn is_empty(&self) -> bool {
        self.dict.is_empty()
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        let k = kernel_vector(&self.spec, &self.dict, x)?;
        Ok(dot(&self.alpha, k.as_slice()))
    }

    /// Prediction error and kernel vector at `(x, y)` against the current state.
    fn prepare(&self, x: &[f64], y: f64) -> Result<(f64, DVector<f64>)> {
        let k = kernel_vector(&self.spec, &self.dict, x)?;
        let e = y - dot(&self.alpha, k.as_slice());
        Ok((e, k))
    }

    fn grow(&mut self, x: &[f64], weight: f64) -> Result<()> {
        self.dict.push(x.to_vec())?;
        self.alpha.push(weight);
        Ok(())
    }

    fn wrong_variant(&self, wanted: &str) -> KafError {
        KafError::arg(format!("{wanted} update on a {} model", self.variant.kind()))
    }

    /// Dispatches to the update rule of the configured variant. Returns the
    /// prediction error.
    pub fn update(&mut self, x: &[f64], y: f64) -> Result<f64> {
        match self.variant {
            KlmsVariant::TypeI { .. } => self.type1_update(x, y),
            KlmsVariant::Qklms { .. } => self.qklms_update(x, y),
            KlmsVariant::Knlms { .. } => self.knlms_update(x, y),
            KlmsVariant::Beta { .. } => self.beta_update(x, y),
        }
    }

    pub fn type1_update(&mut self, x: &[f64], y: f64) -> Result<f64> {
        let KlmsVariant::TypeI { eta } = self.variant else {
            return Err(self.wrong_variant("type-I KLMS"));
        };
        let (e, _) = self.prepare(x, y)?;
        let eta_t = eta.at(&self.spec, self.spec.self_value());
        self.grow(x, eta_t * e)?;
        Ok(e)
    }

    pub fn qklms_update(&mut self, x: &[f64], y: f64) -> Result<f64> {
        let KlmsVariant::Qklms { eta, quant_radius } = self.variant else {
            return Err(self.wrong_variant("QKLMS"));
        };
        let (e, _) = self.prepare(x, y)?;
        let eta_t = eta.at(&self.spec, self.spec.self_value());
        // Nearest stored point; strict comparison keeps the smallest index on ties.
        let mut nearest: Option<(usize, f64)> = None;
        for (i, p) in self.dict.points().iter().enumerate() {
            let d2: f64 = p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
            if nearest.is_none_or(|(_, best)| d2 < best) {
                nearest = Some((i, d2));
            }
        }
        match nearest {
            Some((i, d2)) if d2.sqrt() <= quant_radius => self.alpha[i] += eta_t * e,
            _ => self.grow(x, eta_t * e)?,
        }
        Ok(e)
    }

    pub fn knlms_update(&mut self, x: &[f64], y: f64) -> Result<f64> {
        let KlmsVariant::Knlms { eta, eps_reg, coherence_mu0 } = self.variant else {
            return Err(self.wrong_variant("KNLMS"));
        };
        let (e, k) = self.prepare(x, y)?;
        let k_ss = self.spec.self_value();
        let k_norm2 = k.norm_squared();
        if self.admits(&k, coherence_mu0) {
            let step = eta * e / (eps_reg + k_ss * k_ss + k_norm2);
            for (a, ki) in self.alpha.iter_mut().zip(k.iter()) {
                *a += step * ki;
            }
            self.grow(x, step * k_ss)?;
        } else {
            let step = eta * e / (eps_reg + k_norm2);
            for (a, ki) in self.alpha.iter_mut().zip(k.iter()) {
                *a += step * ki;
            }
        }
        Ok(e)
    }

    pub fn beta_update(&mut self, x: &[f64], y: f64) -> Result<f64> {
        let KlmsVariant::Beta { beta, coherence_mu0 } = self.variant else {
            return Err(self.wrong_variant("beta-KLMS"));
        };
        let (e, k) = self.prepare(x, y)?;
        let gain = 1.0 / (self.spec.noise_variance + self.spec.self_value() + beta * k.norm_squared());
        let step = e * gain;
        for (a, ki) in self.alpha.iter_mut().zip(k.iter()) {
            *a += step * (beta * ki);
        }
        if coherence_mu0.is_none_or(|mu0| self.admits(&k, mu0)) {
            self.grow(x, step)?;
        }
        Ok(e)
    }

    /// Coherence test: every kernel value against the dictionary is at most
    /// `mu0 · k**`. An empty dictionary always admits.
    fn admits(&self, k: &DVector<f64>, mu0: f64) -> bool {
        let limit = mu0 * self.spec.self_value();
        k.iter().all(|&v| v <= limit)
    }

    /// Implied variances `σ_f² = k** + β‖k‖²` and `σ_y² = σ_n² + σ_f²`.
    pub fn beta_variance(&self, x: &[f64]) -> Result<(f64, f64)> {
        let KlmsVariant::Beta { beta, .. } = self.variant else {
            return Err(self.wrong_variant("beta variance"));
        };
        let k = kernel_vector(&self.spec, &self.dict, x)?;
        let sigma_f2 = self.spec.self_value() + beta * k.norm_squared();
        Ok((sigma_f2, self.spec.noise_variance + sigma_f2))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn klms_predict(state: &KlmsState, x: &[f64]) -> Result<f64> {
    state.predict(x)
}

pub fn klms_type1_update(state: &mut KlmsState, x: &[f64], y: f64) -> Result<f64> {
    state.type1_update(x, y)
}

pub fn qklms_update(state: &mut KlmsState, x: &[f64], y: f64) -> Result<f64> {
    state.qklms_update(x, y)
}

pub fn knlms_update(state: &mut KlmsState, x: &[f64], y: f64) -> Result<f64> {
    state.knlms_update(x, y)
}

pub fn beta_klms_update(state: &mut KlmsState, x: &[f64], y: f64) -> Result<f64> {
    state.beta_update(x, y)
}

pub fn beta_variance(state: &KlmsState, x: &[f64]) -> Result<(f64, f64)> {
    state.beta_variance(x)
}

/// Weights after one step of the exact GP mean update written in weight space:
///
/// ```text
/// α' = [Qμ; 0] + e / σ_y² · [(QΣQ − Q)k; 1]
/// σ_y² = σ_n² + k** + kᵀ(QΣQ − Q)k,   e = y − kᵀQμ
/// ```
///
/// `sigma_override` replaces the state's posterior covariance, which lets
/// tests plant the parametric model `Σ = K(βK + I)`.
pub fn general_alpha_update_oracle(
    gp: &GpState,
    x: &[f64],
    y: f64,
    sigma_override: Option<&DMatrix<f64>>,
) -> Result<DVector<f64>> {
    let m = gp.len();
    let sigma = match sigma_override {
        Some(s) => s.as_view(),
        None => gp.sigma(),
    };
    if sigma.shape() != (m, m) {
        return Err(KafError::arg(format!(
            "covariance is {:?}, state has {m} points",
            sigma.shape()
        )));
    }
    let spec = gp.spec();
    let k = kernel_vector(spec, gp.dict(), x)?;
    let q = gp.q_inv();
    let alpha = q * gp.mu();
    let spread = (q * sigma * q - q) * &k;
    let e = y - k.dot(&alpha);
    let sigma_y2 = spec.noise_variance + spec.self_value() + k.dot(&spread);
    let gain = e / sigma_y2;
    let mut out = alpha.resize_vertically(m + 1, 0.0);
    for i in 0..m {
        out[i] += gain * spread[i];
    }
    out[m] += gain;
    Ok(out)
}

impl OnlineRegressor for KlmsState {
    fn name(&self) -> String {
        match self.variant {
            KlmsVariant::TypeI { eta: StepSize::Fixed(eta) } => format!("klms:{eta}"),
            KlmsVariant::TypeI { eta: StepSize::NoiseMatched } => "klms:matched".into(),
            KlmsVariant::Qklms { quant_radius, .. } => format!("qklms:{quant_radius}"),
            KlmsVariant::Knlms { coherence_mu0, .. } => format!("knlms:{coherence_mu0}"),
            KlmsVariant::Beta { beta, .. } => format!("beta:{beta}"),
        }
    }

    fn predict_mean(&self, x: &[f64]) -> Result<f64> {
        self.predict(x)
    }

    fn predictive(&self, x: &[f64]) -> Option<Result<PredictiveDistribution>> {
        if !matches!(self.variant, KlmsVariant::Beta { .. }) {
            return None;
        }
        Some(self.predict(x).and_then(|mean| {
            let (f, y) = self.beta_variance(x)?;
            Ok(PredictiveDistribution {
                mean,
                latent_variance: f,
                output_variance: y,
            })
        }))
    }

    fn update(&mut self, x: &[f64], y: f64) -> Result<()> {
        KlmsState::update(self, x, y).map(|_| ())
    }

    fn dictionary_len(&self) -> usize {
        self.dict.len()
    }

    fn snapshot(&self) -> String {
        crate::snapshot::klms_to_string(self)
    }
}
