//! Exact batch GP regression and kernel ridge weights.
//!
//! This is the O(N³) reference every online model is checked against.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{KafError, Result};
use crate::kernel::{gram_matrix, kernel_vector, Dictionary, KernelSpec};
use crate::model::{clamp_variance, PredictiveDistribution};

const MAX_JITTER_ESCALATIONS: usize = 8;

#[derive(Debug, Clone)]
pub struct BatchFit {
    pub dict: Dictionary,
    pub targets: DVector<f64>,
    /// Solution of `(K + σ_n² I) α = y`.
    pub weights: DVector<f64>,
    pub spec: KernelSpec,
    /// Diagonal regularizer actually used (may exceed `spec.jitter` after escalation).
    pub jitter_used: f64,
    chol: Cholesky<f64, Dyn>,
}

/// Cholesky factor of `K + (σ_n² + jitter) I`, raising jitter tenfold on failure.
pub(crate) fn factor_regularized(
    spec: &KernelSpec,
    dict: &Dictionary,
    noise_variance: f64,
) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let k = gram_matrix(&spec.with_jitter(0.0), dict)?;
    let mut jitter = spec.jitter;
    for _ in 0..=MAX_JITTER_ESCALATIONS {
        let n = k.nrows();
        let a = &k + DMatrix::<f64>::identity(n, n) * (noise_variance + jitter);
        if let Some(chol) = Cholesky::new(a) {
            return Ok((chol, jitter));
        }
        jitter = (jitter * 10.0).max(1e-12 * spec.signal_variance);
    }
    Err(KafError::numerical(format!(
        "Cholesky factorization failed with jitter up to {jitter:e}"
    )))
}

pub fn batch_fit(spec: &KernelSpec, dict: &Dictionary, y: &[f64]) -> Result<BatchFit> {
    spec.validate()?;
    if dict.is_empty() {
        return Err(KafError::arg("batch fit needs at least one point"));
    }
    if y.len() != dict.len() {
        return Err(KafError::arg(format!(
            "{} targets for {} inputs",
            y.len(),
            dict.len()
        )));
    }
    let (chol, jitter_used) = factor_regularized(spec, dict, spec.noise_variance)?;
    let targets = DVector::from_column_slice(y);
    let weights = chol.solve(&targets);
    Ok(BatchFit {
        dict: dict.clone(),
        targets,
        weights,
        spec: *spec,
        jitter_used,
        chol,
    })
}

pub fn batch_predict(fit: &BatchFit, x: &[f64]) -> Result<PredictiveDistribution> {
    fit.predict(x)
}

impl BatchFit {
    pub fn predict(&self, x: &[f64]) -> Result<PredictiveDistribution> {
        let k = kernel_vector(&self.spec, &self.dict, x)?;
        let kss = self.spec.self_value();
        let mean = k.dot(&self.weights);
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&k)
            .ok_or_else(|| KafError::numerical("singular Cholesky factor"))?;
        let latent = clamp_variance(kss - v.norm_squared(), "latent")?;
        Ok(PredictiveDistribution {
            mean,
            latent_variance: latent,
            output_variance: latent + self.spec.noise_variance,
        })
    }

    /// `‖(K + σ_n² I) α − y‖₂`, with the jitter actually used.
    pub fn residual_norm(&self) -> f64 {
        let k = gram_matrix(&self.spec.with_jitter(self.jitter_used), &self.dict)
            .expect("fit dictionary is non-empty");
        let n = k.nrows();
        let a = k + DMatrix::<f64>::identity(n, n) * self.spec.noise_variance;
        (a * &self.weights - &self.targets).norm()
    }
}
