//! Gaussian-process surrogate: Matern kernels, data transforms,
//! hyperparameter fitting and posterior prediction.

mod gp;
mod kernel;
mod transform;

pub use gp::{fit_gp, fit_targets, log_marginal_likelihood, FitConfig, FitInfo, GpModel, Posterior};
pub(crate) use gp::factorize;
pub use kernel::{kernel_matrix, matern_kernel, KernelParams, Smoothness};
pub(crate) use kernel::{cross, gram};
pub use transform::{InputMap, OutputMap, Transform};
