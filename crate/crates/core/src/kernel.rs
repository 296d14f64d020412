//! Kernel evaluation, kernel vectors and Gram matrices.
//!
//! Only the Gaussian (squared-exponential) family is provided:
//!
//! ```text
//! k(x, x') = signal_variance * exp(-|x - x'|^2 / (2 * lengthscale^2))
//! ```

use nalgebra::{DMatrix, DVector};

use crate::error::{KafError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    Gaussian,
}

impl KernelFamily {
    pub fn name(&self) -> &'static str {
        match self {
            KernelFamily::Gaussian => "gaussian",
        }
    }
}

impl std::str::FromStr for KernelFamily {
    type Err = KafError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(KernelFamily::Gaussian),
            other => Err(KafError::arg(format!("unknown kernel family `{other}`"))),
        }
    }
}

/// Kernel hyperparameters plus the observation noise variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub lengthscale: f64,
    pub signal_variance: f64,
    /// Observation noise variance.
    pub noise_variance: f64,
    /// Added to Gram diagonals wherever a Gram matrix is inverted or factored.
    pub jitter: f64,
}

impl KernelSpec {
    /// Gaussian kernel with the default jitter of `1e-10 * signal_variance`.
    pub fn gaussian(lengthscale: f64, signal_variance: f64, noise_variance: f64) -> Self {
        KernelSpec {
            family: KernelFamily::Gaussian,
            lengthscale,
            signal_variance,
            noise_variance,
            jitter: 1e-10 * signal_variance,
        }
    }

    pub fn with_jitter(mut self, jitter: f64) -> Self {
        self.jitter = jitter;
        self
    }

    pub fn with_noise_variance(mut self, noise_variance: f64) -> Self {
        self.noise_variance = noise_variance;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lengthscale > 0.0 && self.lengthscale.is_finite()) {
            return Err(KafError::arg(format!(
                "lengthscale must be positive and finite, got {}",
                self.lengthscale
            )));
        }
        if !(self.signal_variance > 0.0 && self.signal_variance.is_finite()) {
            return Err(KafError::arg(format!(
                "signal variance must be positive and finite, got {}",
                self.signal_variance
            )));
        }
        if !(self.noise_variance >= 0.0 && self.noise_variance.is_finite()) {
            return Err(KafError::arg(format!(
                "noise variance must be non-negative, got {}",
                self.noise_variance
            )));
        }
        if !(self.jitter >= 0.0 && self.jitter.is_finite()) {
            return Err(KafError::arg(format!(
                "jitter must be non-negative, got {}",
                self.jitter
            )));
        }
        Ok(())
    }

    /// k(x, x) for any x.
    pub fn self_value(&self) -> f64 {
        match self.family {
            KernelFamily::Gaussian => self.signal_variance,
        }
    }

    /// Kernel value without the dimension check. Callers guarantee equal lengths.
    #[inline]
    pub(crate) fn eval_unchecked(&self, x: &[f64], x2: &[f64]) -> f64 {
        match self.family {
            KernelFamily::Gaussian => {
                let sq: f64 = x.iter().zip(x2).map(|(a, b)| (a - b) * (a - b)).sum();
                self.signal_variance * (-sq / (2.0 * self.lengthscale * self.lengthscale)).exp()
            }
        }
    }

    pub fn eval(&self, x: &[f64], x2: &[f64]) -> Result<f64> {
        check_dim(x.len(), x2.len())?;
        Ok(self.eval_unchecked(x, x2))
    }
}

pub fn eval_kernel(spec: &KernelSpec, x: &[f64], x2: &[f64]) -> Result<f64> {
    spec.eval(x, x2)
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(KafError::arg(format!(
            "dimension mismatch: expected {expected}, got {got}"
        )));
    }
    Ok(())
}

/// Ordered set of input points indexing kernel weights and model state.
///
/// Every point carries the insertion id it was given when added; ids are
/// never reused, so they survive eviction of older points.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dictionary {
    dim: Option<usize>,
    points: Vec<Vec<f64>>,
    ids: Vec<u64>,
    next_id: u64,
}

impl Dictionary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_points(points: Vec<Vec<f64>>) -> Result<Self> {
        let mut dict = Dictionary::new();
        for p in points {
            dict.push(p)?;
        }
        Ok(dict)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Input dimension, fixed by the first point ever added.
    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i]
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.is_empty() {
            return Err(KafError::arg("input vectors must have dimension >= 1"));
        }
        match self.dim {
            Some(d) => check_dim(d, x.len()),
            None => Ok(()),
        }
    }

    /// Appends a point and returns its insertion id.
    pub fn push(&mut self, x: Vec<f64>) -> Result<u64> {
        self.check_input(&x)?;
        self.dim = Some(x.len());
        let id = self.next_id;
        self.points.push(x);
        self.ids.push(id);
        self.next_id += 1;
        Ok(id)
    }

    pub(crate) fn remove(&mut self, index: usize) -> Vec<f64> {
        self.ids.remove(index);
        self.points.remove(index)
    }

    /// Rebuilds a dictionary with explicit ids (snapshot loading).
    pub(crate) fn from_parts(dim: Option<usize>, points: Vec<Vec<f64>>, ids: Vec<u64>, next_id: u64) -> Result<Self> {
        if points.len() != ids.len() {
            return Err(KafError::arg("dictionary ids and points differ in length"));
        }
        if let Some(d) = dim {
            for p in &points {
                check_dim(d, p.len())?;
            }
        } else if !points.is_empty() {
            return Err(KafError::arg("non-empty dictionary needs a dimension"));
        }
        if ids.windows(2).any(|w| w[0] >= w[1]) || ids.last().is_some_and(|&l| l >= next_id) {
            return Err(KafError::arg("dictionary ids must be increasing and below next id"));
        }
        Ok(Dictionary { dim, points, ids, next_id })
    }

    pub(crate) fn next_id(&self) -> u64 {
        self.next_id
    }
}

/// Kernel values between every dictionary point and `x`, in dictionary order.
pub fn kernel_vector(spec: &KernelSpec, dict: &Dictionary, x: &[f64]) -> Result<DVector<f64>> {
    dict.check_input(x)?;
    Ok(kernel_vector_unchecked(spec, dict, x))
}

pub(crate) fn kernel_vector_unchecked(spec: &KernelSpec, dict: &Dictionary, x: &[f64]) -> DVector<f64> {
    DVector::from_iterator(dict.len(), dict.points().iter().map(|p| spec.eval_unchecked(p, x)))
}

/// Gram matrix of the dictionary with `spec.jitter` on the diagonal.
pub fn gram_matrix(spec: &KernelSpec, dict: &Dictionary) -> Result<DMatrix<f64>> {
    if dict.is_empty() {
        return Err(KafError::arg("gram matrix of an empty dictionary"));
    }
    let n = dict.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = spec.self_value() + spec.jitter;
        for j in 0..i {
            let v = spec.eval_unchecked(dict.point(i), dict.point(j));
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(k)
}
