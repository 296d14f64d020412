//! Incremental GP regression.
//!
//! The model keeps the dictionary, the posterior mean `mu` and covariance
//! `sigma` of the latent function at the dictionary points, and the inverse
//! Gram matrix `q_inv`. Each admitted observation grows all three by one
//! row/column through rank-one updates, so a step costs O(m²) for an
//! m-point dictionary.

use nalgebra::{DMatrix, DMatrixView, DVector};

use crate::error::{KafError, Result};
use crate::kernel::{gram_matrix, kernel_vector, Dictionary, KernelSpec};
use crate::model::{clamp_variance, OnlineRegressor, PredictiveDistribution};

/// Diagonal entries of `sigma` below this mean the posterior lost PSD.
const PSD_FLOOR: f64 = -1e-6;

#[derive(Debug, Clone)]
pub struct GpState {
    spec: KernelSpec,
    dict: Dictionary,
    targets: Vec<f64>,
    mu: DVector<f64>,
    sigma: SquareBuffer,
    q_inv: SquareBuffer,
    /// `q_inv * mu`, cached for cheap mean predictions.
    alpha: DVector<f64>,
    budget: Option<usize>,
    admission_threshold: f64,
}

/// Intermediate quantities of one update, all evaluated against the state
/// before the update.
#[derive(Debug, Clone, PartialEq)]
pub struct GpUpdateScratch {
    pub k_vec: DVector<f64>,
    pub k_ss: f64,
    /// `Q k`
    pub q: DVector<f64>,
    /// `Σ q`
    pub h: DVector<f64>,
    /// Novelty `k** − kᵀ Q k`.
    pub gamma2: f64,
    pub sigma_f2: f64,
    pub sigma_y2: f64,
    pub y_hat: f64,
    pub e: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateOutcome {
    Admitted,
    /// Novelty at or below the admission threshold; state untouched.
    Rejected,
    /// Admitted, then the oldest point was evicted to respect the budget.
    AdmittedWithEviction,
}

/// Diagnostics from [`GpState::check_invariants`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvariantReport {
    pub sigma_asymmetry: f64,
    pub q_asymmetry: f64,
    /// `max |Q K − I|` with K the jittered Gram matrix.
    pub qk_deviation: f64,
    pub sigma_min_eigenvalue: f64,
}

impl GpState {
    pub fn new(spec: KernelSpec, budget: Option<usize>, admission_threshold: f64) -> Result<Self> {
        spec.validate()?;
        if budget == Some(0) {
            return Err(KafError::arg("budget must be positive"));
        }
        if !(admission_threshold >= 0.0 && admission_threshold.is_finite()) {
            return Err(KafError::arg(format!(
                "admission threshold must be non-negative, got {admission_threshold}"
            )));
        }
        Ok(GpState {
            spec,
            dict: Dictionary::new(),
            targets: Vec::new(),
            mu: DVector::zeros(0),
            sigma: SquareBuffer::default(),
            q_inv: SquareBuffer::default(),
            alpha: DVector::zeros(0),
            budget,
            admission_threshold,
        })
    }

    /// Assembles a state from explicit posterior moments. `q_inv` is taken as
    /// given, so callers can plant an arbitrary covariance model.
    pub fn from_parts(
        spec: KernelSpec,
        dict: Dictionary,
        mu: DVector<f64>,
        sigma: DMatrix<f64>,
        q_inv: DMatrix<f64>,
    ) -> Result<Self> {
        spec.validate()?;
        let m = dict.len();
        if mu.len() != m || sigma.shape() != (m, m) || q_inv.shape() != (m, m) {
            return Err(KafError::arg(format!(
                "state parts do not match a dictionary of {m} points"
            )));
        }
        let alpha = &q_inv * &mu;
        Ok(GpState {
            spec,
            dict,
            targets: vec![f64::NAN; m],
            mu,
            sigma: SquareBuffer::from_matrix(&sigma),
            q_inv: SquareBuffer::from_matrix(&q_inv),
            alpha,
            budget: None,
            admission_threshold: 0.0,
        })
    }

    pub(crate) fn restore(
        spec: KernelSpec,
        budget: Option<usize>,
        admission_threshold: f64,
        dict: Dictionary,
        targets: Vec<f64>,
        mu: DVector<f64>,
        sigma: DMatrix<f64>,
        q_inv: DMatrix<f64>,
    ) -> Result<Self> {
        let mut state = GpState::from_parts(spec, dict, mu, sigma, q_inv)?;
        if targets.len() != state.dict.len() {
            return Err(KafError::arg("targets do not match dictionary"));
        }
        let fresh = GpState::new(spec, budget, admission_threshold)?;
        state.targets = targets;
        state.budget = fresh.budget;
        state.admission_threshold = fresh.admission_threshold;
        Ok(state)
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }
    pub fn dict(&self) -> &Dictionary {
        &self.dict
    }
    /// Observed outputs for the current dictionary points. Diagnostic only.
    pub fn targets(&self) -> &[f64] {
        &self.targets
    }
    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }
    pub fn sigma(&self) -> DMatrixView<'_, f64> {
        self.sigma.view()
    }
    pub fn q_inv(&self) -> DMatrixView<'_, f64> {
        self.q_inv.view()
    }
    pub fn budget(&self) -> Option<usize> {
        self.budget
    }
    pub fn admission_threshold(&self) -> f64 {
        self.admission_threshold
    }
    pub fn len(&self) -> usize {
        self.dict.len()
    }
    pub fn is_empty(&self) -> bool {
        self.dict.is_empty()
    }

    /// Predictive distribution of a new observation at `x`:
    /// mean `kᵀQμ`, output variance `σ_n² + k** + kᵀ(QΣQ − Q)k`.
    pub fn predict(&self, x: &[f64]) -> Result<PredictiveDistribution> {
        let s = self.compute_scratch(x, 0.0)?;
        let latent = clamp_variance(s.sigma_f2, "latent")?;
        Ok(PredictiveDistribution {
            mean: s.y_hat,
            latent_variance: latent,
            output_variance: latent + self.spec.noise_variance,
        })
    }

    /// Mean only, through the cached weights `α = Qμ`. O(m).
    pub fn predict_mean(&self, x: &[f64]) -> Result<f64> {
        let k = kernel_vector(&self.spec, &self.dict, x)?;
        Ok(k.dot(&self.alpha))
    }

    pub fn compute_scratch(&self, x: &[f64], y: f64) -> Result<GpUpdateScratch> {
        let k_vec = kernel_vector(&self.spec, &self.dict, x)?;
        let k_ss = self.spec.self_value();
        let q = self.q_inv.view() * &k_vec;
        let h = self.sigma.view() * &q;
        let gamma2 = k_ss - k_vec.dot(&q);
        let sigma_f2 = gamma2 + q.dot(&h);
        let sigma_y2 = self.spec.noise_variance + sigma_f2;
        let y_hat = q.dot(&self.mu);
        Ok(GpUpdateScratch {
            k_vec,
            k_ss,
            q,
            h,
            gamma2,
            sigma_f2,
            sigma_y2,
            y_hat,
            e: y - y_hat,
        })
    }

    /// Processes one observation. Points whose novelty does not exceed the
    /// admission threshold are skipped entirely.
    pub fn update(&mut self, x: &[f64], y: f64) -> Result<(UpdateOutcome, GpUpdateScratch)> {
        let s = self.compute_scratch(x, y)?;
        if !(s.gamma2 > self.admission_threshold) {
            return Ok((UpdateOutcome::Rejected, s));
        }
        // The new point enters with prior variance k** + jitter, so Q stays the
        // exact inverse of the jittered Gram matrix and the posterior equals a
        // batch solve against K + jitter·I.
        let nugget = self.spec.jitter;
        let gamma2 = s.gamma2 + nugget;
        let sigma_f2 = s.sigma_f2 + nugget;
        let sigma_y2 = s.sigma_y2 + nugget;
        if sigma_y2 <= 0.0 {
            return Err(KafError::numerical(format!(
                "non-positive predictive variance {sigma_y2} at update"
            )));
        }
        let m = self.dict.len();
        let inv_sy2 = 1.0 / sigma_y2;

        // The diagonal of the updated Σ is known up front, so the state is
        // only touched once the update is known to succeed.
        let diag = |i: usize| {
            if i < m {
                self.sigma.buf[(i, i)] - s.h[i] * s.h[i] * inv_sy2
            } else {
                sigma_f2 - sigma_f2 * sigma_f2 * inv_sy2
            }
        };
        if let Some(i) = (0..=m).find(|&i| diag(i) < PSD_FLOOR) {
            return Err(KafError::numerical(format!(
                "posterior covariance lost positive semi-definiteness (diagonal {} at {i})",
                diag(i)
            )));
        }
        self.dict.push(x.to_vec())?;
        self.targets.push(y);

        let gain = s.e * inv_sy2;
        self.mu.resize_vertically_mut(m + 1, s.y_hat);
        for i in 0..m {
            self.mu[i] += gain * s.h[i];
        }
        self.mu[m] += gain * sigma_f2;

        // Σ_{t+1} = [[Σ, h], [hᵀ, σ_f²]] − b bᵀ / σ_y², with b = [h; σ_f²].
        let b = s.h.clone().resize_vertically(m + 1, sigma_f2);
        self.sigma.grow(s.h.as_slice(), sigma_f2);
        self.sigma.symmetric_rank_one(-inv_sy2, b.as_slice());

        // Q_{t+1} = [[Q, 0], [0, 0]] + c cᵀ / γ², with c = [q; −1].
        let c = s.q.clone().resize_vertically(m + 1, -1.0);
        self.q_inv.grow(&vec![0.0; m], 0.0);
        self.q_inv.symmetric_rank_one(1.0 / gamma2, c.as_slice());

        let mut outcome = UpdateOutcome::Admitted;
        if self.budget.is_some_and(|b| self.dict.len() > b) {
            self.evict_oldest()?;
            outcome = UpdateOutcome::AdmittedWithEviction;
        }
        self.alpha = self.q_inv.view() * &self.mu;
        Ok((outcome, s))
    }

    /// Drops the oldest point: its row/column leaves `Σ` (marginalization)
    /// and `Q` is downdated to the inverse of the reduced Gram matrix,
    /// `Q' = Q₂₂ − Q₂₁ Q₁₂ / Q₁₁`.
    fn evict_oldest(&mut self) -> Result<()> {
        let m = self.dict.len();
        let q = self.q_inv.view();
        let pivot = q[(0, 0)];
        if !(pivot > 0.0) {
            return Err(KafError::numerical(format!("inverse Gram pivot {pivot} at eviction")));
        }
        let coupling: Vec<f64> = (1..m).map(|i| q[(i, 0)]).collect();
        self.dict.remove(0);
        self.targets.remove(0);
        self.mu = self.mu.clone().remove_row(0);
        self.sigma.remove_first();
        self.q_inv.remove_first();
        self.q_inv.symmetric_rank_one(-1.0 / pivot, &coupling);
        Ok(())
    }

    /// KRLS weights `α = Qμ`, equal to `(K + σ_n² I)⁻¹ y` without pruning.
    pub fn krls_weights(&self) -> Result<DVector<f64>> {
        if self.dict.is_empty() {
            return Err(KafError::arg("kernel weights of an empty model"));
        }
        Ok(self.q_inv.view() * &self.mu)
    }

    /// O(m³) consistency check.
    pub fn check_invariants(&self) -> InvariantReport {
        let m = self.dict.len();
        if m == 0 {
            return InvariantReport {
                sigma_asymmetry: 0.0,
                q_asymmetry: 0.0,
                qk_deviation: 0.0,
                sigma_min_eigenvalue: 0.0,
            };
        }
        let k = gram_matrix(&self.spec, &self.dict).expect("non-empty");
        let sigma = self.sigma.view();
        let q = self.q_inv.view();
        InvariantReport {
            sigma_asymmetry: (sigma - sigma.transpose()).amax(),
            q_asymmetry: (q - q.transpose()).amax(),
            qk_deviation: (q * k - DMatrix::<f64>::identity(m, m)).amax(),
            sigma_min_eigenvalue: sigma.clone_owned().symmetric_eigenvalues().min(),
        }
    }
}

/// Square matrix stored in the top-left corner of a larger column-major
/// buffer, so adding a row and column is amortized O(n) instead of a full
/// reallocation.
#[derive(Debug, Clone, Default)]
struct SquareBuffer {
    buf: DMatrix<f64>,
    n: usize,
}

impl SquareBuffer {
    fn from_matrix(m: &DMatrix<f64>) -> Self {
        SquareBuffer { buf: m.clone(), n: m.nrows() }
    }

    fn view(&self) -> DMatrixView<'_, f64> {
        self.buf.view((0, 0), (self.n, self.n))
    }

    /// Appends a row and column holding `border`, with `corner` on the diagonal.
    fn grow(&mut self, border: &[f64], corner: f64) {
        let n = self.n;
        debug_assert_eq!(border.len(), n);
        if n + 1 > self.buf.nrows() {
            let cap = (2 * self.buf.nrows()).max(16);
            let mut bigger = DMatrix::zeros(cap, cap);
            bigger.view_mut((0, 0), (n, n)).copy_from(&self.view());
            self.buf = bigger;
        }
        for (i, &v) in border.iter().enumerate() {
            self.buf[(i, n)] = v;
            self.buf[(n, i)] = v;
        }
        self.buf[(n, n)] = corner;
        self.n = n + 1;
    }

    /// `A += alpha · v vᵀ`. Each entry is `alpha · (v_i v_j)`, so a symmetric
    /// matrix stays exactly symmetric.
    fn symmetric_rank_one(&mut self, alpha: f64, v: &[f64]) {
        let n = self.n;
        debug_assert_eq!(v.len(), n);
        let ld = self.buf.nrows();
        let data = self.buf.as_mut_slice();
        for (j, &vj) in v.iter().enumerate() {
            let col = &mut data[j * ld..j * ld + n];
            for (a, &vi) in col.iter_mut().zip(v) {
                *a += alpha * (vi * vj);
            }
        }
    }

    /// Deletes the first row and column.
    fn remove_first(&mut self) {
        let n = self.n;
        let ld = self.buf.nrows();
        let data = self.buf.as_mut_slice();
        for j in 1..n {
            let src = j * ld + 1;
            data.copy_within(src..src + n - 1, (j - 1) * ld);
        }
        self.n = n - 1;
    }
}

pub fn gp_init(spec: KernelSpec, budget: Option<usize>, admission_threshold: f64) -> Result<GpState> {
    GpState::new(spec, budget, admission_threshold)
}

pub fn gp_predict(state: &GpState, x: &[f64]) -> Result<PredictiveDistribution> {
    state.predict(x)
}

pub fn gp_compute_scratch(state: &GpState, x: &[f64], y: f64) -> Result<GpUpdateScratch> {
    state.compute_scratch(x, y)
}

pub fn gp_update(state: &mut GpState, x: &[f64], y: f64) -> Result<(UpdateOutcome, GpUpdateScratch)> {
    state.update(x, y)
}

pub fn krls_weights(state: &GpState) -> Result<DVector<f64>> {
    state.krls_weights()
}

impl OnlineRegressor for GpState {
    fn name(&self) -> String {
        match self.budget {
            Some(b) => format!("gp-budget{b}"),
            None => "gp".to_string(),
        }
    }

    fn predict_mean(&self, x: &[f64]) -> Result<f64> {
        GpState::predict_mean(self, x)
    }

    fn predictive(&self, x: &[f64]) -> Option<Result<PredictiveDistribution>> {
        Some(self.predict(x))
    }

    fn update(&mut self, x: &[f64], y: f64) -> Result<()> {
        GpState::update(self, x, y).map(|_| ())
    }

    fn dictionary_len(&self) -> usize {
        self.dict.len()
    }

    fn snapshot(&self) -> String {
        crate::snapshot::gp_to_string(self)
    }
}
