use crate::error::{domain, Result};
use crate::kernel::{Kernel, KernelPoint};
use crate::scalar::{CompensatedSum, Real};

use super::{Dataset, ModelParams, Theta};

/// `P(Y = 1 | X₀ = x0) = L_0(β₀ + β₁x0, β₁²τ²)`.
pub fn success_prob<T: Real>(kernel: &Kernel<T>, params: &ModelParams<T>, x0: T) -> Result<T> {
    kernel.l(0, params.b0 + params.b1 * x0, params.s())
}

fn floor<T: Real>() -> T {
    T::lit(1e-300).max(T::min_positive_value())
}

pub(crate) struct Accumulated<T> {
    pub loglik: T,
    pub grad: [T; 3],
}

/// One ordered pass over the rows; gradient is w.r.t. `(b0, b1, s)`.
pub(crate) fn accumulate<T: Real>(
    kernel: &Kernel<T>,
    theta: &Theta<T>,
    data: &Dataset<T>,
    want_grad: bool,
) -> Result<Accumulated<T>> {
    if data.is_empty() {
        return domain("dataset is empty");
    }
    if !(theta.b0.is_finite() && theta.b1.is_finite() && theta.s.is_finite()) || theta.s < T::zero()
    {
        return domain(format!("invalid parameters {theta:?}"));
    }
    let eps = floor::<T>();
    let half = T::lit(0.5);
    let mut ll = CompensatedSum::new();
    let mut g = [CompensatedSum::new(); 3];
    for row in &data.rows {
        let u = theta.b0 + theta.b1 * row.x0;
        if !u.is_finite() {
            return domain("linear predictor overflowed");
        }
        let vals = kernel.values_at(KernelPoint { x: u, v: theta.s });
        // P(Y = y | x0), and the sign that maps dL_0 to dP(Y = y)
        let (p, sign) = if row.y == 1 {
            (vals.cdf, T::one())
        } else {
            (vals.upper, -T::one())
        };
        let clamped = p < eps;
        ll.add(p.max(eps).min(T::one() - eps).ln());
        if want_grad && !clamped {
            let r = sign / p;
            g[0].add(r * vals.d[0]);
            g[1].add(r * vals.d[0] * row.x0);
            g[2].add(r * half * vals.d[1]);
        }
    }
    Ok(Accumulated {
        loglik: ll.value(),
        grad: [g[0].value(), g[1].value(), g[2].value()],
    })
}

/// Bernoulli log-likelihood `Σ y ln p̂ + (1−y) ln(1−p̂)`, `p̂ = L_0(b0 + b1x0, s)`.
///
/// `1 − p̂` is evaluated directly from the upper tail and both probabilities are
/// clamped to `[1e-300, 1 − 1e-300]`. Rows are reduced in order with
/// compensated summation.
pub fn log_likelihood<T: Real>(kernel: &Kernel<T>, theta: &Theta<T>, data: &Dataset<T>) -> Result<T> {
    Ok(accumulate(kernel, theta, data, false)?.loglik)
}

/// Analytic gradient of [`log_likelihood`] w.r.t. `(b0, b1, s)`, using
/// `∂p̂/∂b0 = L_1`, `∂p̂/∂b1 = x0·L_1`, `∂p̂/∂s = ½L_2`.
pub fn score<T: Real>(kernel: &Kernel<T>, theta: &Theta<T>, data: &Dataset<T>) -> Result<[T; 3]> {
    Ok(accumulate(kernel, theta, data, true)?.grad)
}
