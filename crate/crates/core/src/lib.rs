//! Logistic regression with Gaussian Berkson error in the regressor.
//!
//! * [`kernel`]: the smoothed logistic function `L_k(x, v)` and its inverse.
//! * [`identify`]: the implicit link between two smoothings, root counting
//!   for crossing equations and identifiability verdicts.
//! * [`model`]: simulation, likelihood, score and maximum-likelihood fits.
//! * [`verify`]: numerical certification of the analytic inequalities.
//! * [`cli`]: the `berkson` command-line front end.
//!
//! Numerical code is generic over [`Real`] (`f32`/`f64`); the aliases below
//! fix the common `f64` instantiations.

pub mod cli;
pub mod error;
pub mod identify;
pub mod kernel;
pub mod model;
pub mod quadrature;
pub mod report;
pub mod scalar;
pub mod verify;

pub use error::{Error, Result};
pub use kernel::{inverse_mu, logistic_cdf, Kernel, KernelConfig, KernelPoint, KernelValues};
pub use scalar::Real;

pub type Kernel64 = Kernel<f64>;
pub type Kernel32 = Kernel<f32>;
pub type KernelConfig64 = KernelConfig<f64>;
