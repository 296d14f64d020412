//! The online-regressor interface shared by every model.

use crate::error::Result;

/// Predictive mean with latent (`f`) and observation (`y`) variances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictiveDistribution {
    pub mean: f64,
    pub latent_variance: f64,
    pub output_variance: f64,
}

impl PredictiveDistribution {
    pub fn output_std(&self) -> f64 {
        self.output_variance.sqrt()
    }
}

/// A model that predicts one input at a time and learns from one labelled
/// pair at a time. Prediction never mutates the model.
pub trait OnlineRegressor: Send {
    /// Label used in experiment output.
    fn name(&self) -> String;

    fn predict_mean(&self, x: &[f64]) -> Result<f64>;

    /// Full predictive distribution, for models that define one.
    fn predictive(&self, x: &[f64]) -> Option<Result<PredictiveDistribution>> {
        let _ = x;
        None
    }

    fn update(&mut self, x: &[f64], y: f64) -> Result<()>;

    fn dictionary_len(&self) -> usize;

    /// Lossless text dump of the model state.
    fn snapshot(&self) -> String;
}

/// Clamps a variance that is negative only through rounding.
pub(crate) fn clamp_variance(v: f64, what: &str) -> Result<f64> {
    const FLOOR: f64 = -1e-10;
    if v.is_nan() || v < FLOOR {
        return Err(crate::error::KafError::numerical(format!(
            "{what} variance {v} is below {FLOOR}"
        )));
    }
    Ok(v.max(0.0))
}
