//! Online kernel regression.
//!
//! This crate implements exact online Gaussian-process regression (with the
//! kernel recursive least-squares weights it implies) next to the kernel
//! least-mean-squares family: type-I KLMS, QKLMS, type-II KNLMS and β-KLMS.
//! β-KLMS is the weight update obtained by replacing the GP posterior
//! covariance with the parametric model `Σ = K(βK + I)`; β = 0 recovers KLMS
//! with a noise-matched step size and β = 1 recovers KNLMS for unit-diagonal
//! kernels.
//!
//! The [`batch`] module holds the exact O(N³) solution used as an oracle,
//! [`datasets`] and [`evaluation`] reproduce the learning-curve,
//! reconvergence and predictive-uncertainty experiments.

pub mod batch;
pub mod datasets;
pub mod error;
pub mod evaluation;
pub mod kernel;
pub mod klms;
pub mod model;
pub mod online_gp;
pub mod snapshot;

pub use batch::{batch_fit, batch_predict, BatchFit};
pub use error::{KafError, Result};
pub use kernel::{eval_kernel, gram_matrix, kernel_vector, Dictionary, KernelFamily, KernelSpec};
pub use klms::{general_alpha_update_oracle, KlmsState, KlmsVariant, StepSize};
pub use model::{OnlineRegressor, PredictiveDistribution};
pub use online_gp::{GpState, GpUpdateScratch, UpdateOutcome};
pub use snapshot::Snapshot;
