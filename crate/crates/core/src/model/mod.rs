//! Berkson logistic model: `P(Y = 1 | X₀) = L_0(b0 + b1·X₀, b1²·τ²)`.

mod dataset;
mod fit;
mod likelihood;
mod simulate;

pub use dataset::{Dataset, DesignKind, Observation};
pub use fit::{fit_known_tau, fit_unknown_tau, FitOptions, FitResult};
pub use likelihood::{log_likelihood, score, success_prob};
pub use simulate::{simulate, Design, Sampler};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::scalar::Real;

/// Structural parameters `(β₀, β₁, τ²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams<T> {
    pub b0: T,
    pub b1: T,
    pub tau2: T,
}

impl<T: Real> ModelParams<T> {
    pub fn new(b0: T, b1: T, tau2: T) -> Result<Self> {
        if !(b0.is_finite() && b1.is_finite() && tau2.is_finite()) {
            return domain("model parameters must be finite");
        }
        if tau2 < T::zero() {
            return domain(format!("tau2 must be >= 0, got {tau2}"));
        }
        Ok(Self { b0, b1, tau2 })
    }

    /// Smoothing variance `s = β₁²·τ²` of the linear predictor.
    pub fn s(&self) -> T {
        self.b1 * self.b1 * self.tau2
    }

    pub fn reduced(&self) -> Theta<T> {
        Theta {
            b0: self.b0,
            b1: self.b1,
            s: self.s(),
        }
    }
}

/// Identified parameterisation `(β₀, β₁, s = β₁²τ²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theta<T> {
    pub b0: T,
    pub b1: T,
    pub s: T,
}

impl<T: Real> Theta<T> {
    pub fn new(b0: T, b1: T, s: T) -> Result<Self> {
        if !(b0.is_finite() && b1.is_finite() && s.is_finite()) {
            return domain("parameters must be finite");
        }
        if s < T::zero() {
            return domain(format!("s must be >= 0, got {s}"));
        }
        Ok(Self { b0, b1, s })
    }
}
