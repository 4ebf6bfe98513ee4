//! The Gaussian-smoothed logistic function and its x-derivatives.
//!
//! `L_0(x, v) = E[σ(x − ξ)]` with `ξ ~ N(0, v)` and `σ` the logistic CDF;
//! `L_k = ∂ᵏL_0/∂xᵏ`. For `v = 0` the closed logistic forms are used. For
//! `v > 0` the expectation is taken over the closed-form `k`-th derivative of
//! `σ`, so no numerical differentiation is involved:
//!
//! * `0 < v ≤ 1`: Gauss–Hermite with `t = √(2v)·u`;
//! * `v > 1`: trapezoidal rule in `t` with step ≤ 0.4 over `|t| ≤ 9.5√v`.
//!
//! Both rules converge geometrically because `σ⁽ᵏ⁾(x − t)` is analytic in the
//! strip `|Im t| < π`; Gauss–Hermite loses that advantage once `√(2v)` stretches
//! the pole distance below a few units, which is where the trapezoid takes over.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::quadrature::GaussHermite;
use crate::scalar::Real;

/// Highest supported derivative order.
pub const MAX_ORDER: usize = 4;

/// Variance above which the trapezoidal rule replaces Gauss–Hermite.
const GH_MAX_VARIANCE: f64 = 1.0;
const TRAPEZOID_STEP: f64 = 0.4;
const TRAPEZOID_HALF_WIDTH: f64 = 9.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig<T> {
    /// Gauss–Hermite node count.
    pub quad_order: usize,
    /// Absolute tolerance on `|L_0(μ, v) − z|` for inversion.
    pub inv_tol: T,
    /// `|x|/√(1+v)` beyond which smoothed values are replaced by their limits.
    pub tail_cut: T,
}

impl<T: Real> Default for KernelConfig<T> {
    fn default() -> Self {
        Self {
            quad_order: 64,
            inv_tol: T::lit(1e-13),
            tail_cut: T::lit(38.0),
        }
    }
}

impl<T: Real> KernelConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.quad_order < 16 {
            return domain(format!("quad_order must be >= 16, got {}", self.quad_order));
        }
        if !(self.inv_tol > T::zero() && self.inv_tol <= T::lit(1e-6)) {
            return domain(format!("inv_tol must lie in (0, 1e-6], got {}", self.inv_tol));
        }
        if !(self.tail_cut > T::zero() && self.tail_cut.is_finite()) {
            return domain(format!("tail_cut must be positive, got {}", self.tail_cut));
        }
        Ok(())
    }
}

/// Argument `x` on the linear-predictor scale and smoothing variance `v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelPoint<T> {
    pub x: T,
    pub v: T,
}

impl<T: Real> KernelPoint<T> {
    pub fn new(x: T, v: T) -> Result<Self> {
        if !x.is_finite() {
            return domain(format!("x must be finite, got {x}"));
        }
        if !(v >= T::zero() && v.is_finite()) {
            return domain(format!("variance must be finite and >= 0, got {v}"));
        }
        Ok(Self { x, v })
    }
}

/// All kernel quantities at one point, from a single quadrature pass.
///
/// `upper` is `1 − L_0` computed directly, accurate in the right tail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelValues<T> {
    pub cdf: T,
    pub upper: T,
    pub d: [T; MAX_ORDER],
}

impl<T: Real> KernelValues<T> {
    /// `L_k` for `k ∈ 0..=4`.
    pub fn l(&self, k: usize) -> T {
        if k == 0 {
            self.cdf
        } else {
            self.d[k - 1]
        }
    }

    fn zero() -> Self {
        Self {
            cdf: T::zero(),
            upper: T::zero(),
            d: [T::zero(); MAX_ORDER],
        }
    }

    fn add_scaled(&mut self, w: T, o: &Self) {
        self.cdf = self.cdf + w * o.cdf;
        self.upper = self.upper + w * o.upper;
        for k in 0..MAX_ORDER {
            self.d[k] = self.d[k] + w * o.d[k];
        }
    }

    fn add(&self, o: &Self) -> Self {
        let mut d = self.d;
        for (k, dk) in d.iter_mut().enumerate() {
            *dk = *dk + o.d[k];
        }
        Self {
            cdf: self.cdf + o.cdf,
            upper: self.upper + o.upper,
            d,
        }
    }
}

/// Logistic CDF `eˣ/(1+eˣ)`, evaluated through `e^{−|x|}`.
pub fn logistic_cdf<T: Real>(x: T) -> Result<T> {
    if !x.is_finite() {
        return domain(format!("logistic_cdf argument must be finite, got {x}"));
    }
    Ok(logistic_closed(x).cdf)
}

/// Closed forms of the logistic CDF and its first four derivatives.
///
/// Written in `q = e^{−|x|}` and reflected for `x < 0`, so parity holds bit-exactly.
pub(crate) fn logistic_closed<T: Real>(x: T) -> KernelValues<T> {
    let one = T::one();
    let a = x.abs();
    let q = (-a).exp();
    let em = (-a).exp_m1(); // q − 1, accurate near 0
    let d = one + q;
    let d2 = d * d;
    let d3 = d2 * d;
    let lo = q / d;
    let hi = one / d;
    let l1 = q / d2;
    let l2 = q * em / d3;
    let l3 = q * (one - T::lit(4.0) * q + q * q) / (d2 * d2);
    let l4 = q * em * (one - T::lit(10.0) * q + q * q) / (d3 * d2);
    if x >= T::zero() {
        KernelValues {
            cdf: hi,
            upper: lo,
            d: [l1, l2, l3, l4],
        }
    } else {
        KernelValues {
            cdf: lo,
            upper: hi,
            d: [l1, -l2, l3, -l4],
        }
    }
}

/// Evaluator for `L_k(x, v)` holding the precomputed Gauss–Hermite rule.
#[derive(Debug, Clone)]
pub struct Kernel<T> {
    cfg: KernelConfig<T>,
    rule: GaussHermite<T>,
}

impl<T: Real> Kernel<T> {
    pub fn new(cfg: KernelConfig<T>) -> Result<Self> {
        cfg.validate()?;
        let rule = GaussHermite::new(cfg.quad_order)?;
        Ok(Self { cfg, rule })
    }

    pub fn config(&self) -> &KernelConfig<T> {
        &self.cfg
    }

    /// `L_k(p.x, p.v)`.
    pub fn smoothed(&self, k: usize, p: KernelPoint<T>) -> Result<T> {
        if k > MAX_ORDER {
            return domain(format!("derivative order must be in 0..=4, got {k}"));
        }
        Ok(self.values_at(p).l(k))
    }

    /// `L_k(x, v)` with argument validation.
    pub fn l(&self, k: usize, x: T, v: T) -> Result<T> {
        self.smoothed(k, KernelPoint::new(x, v)?)
    }

    /// `∂L_k/∂v = ½·L_{k+2}` for `k ∈ 0..=2`.
    pub fn dl_dv(&self, k: usize, p: KernelPoint<T>) -> Result<T> {
        if k > 2 {
            return domain(format!("dL/dv is available for k in 0..=2, got {k}"));
        }
        Ok(T::lit(0.5) * self.smoothed(k + 2, p)?)
    }

    /// Every `L_k` plus the upper tail at once, with validation.
    pub fn values(&self, x: T, v: T) -> Result<KernelValues<T>> {
        Ok(self.values_at(KernelPoint::new(x, v)?))
    }

    /// Unvalidated evaluation; callers guarantee finite `x` and `v ≥ 0`.
    pub(crate) fn values_at(&self, p: KernelPoint<T>) -> KernelValues<T> {
        let KernelPoint { x, v } = p;
        if v == T::zero() {
            return logistic_closed(x);
        }
        if x.abs() / (T::one() + v).sqrt() > self.cfg.tail_cut {
            let mut out = KernelValues::zero();
            if x > T::zero() {
                out.cdf = T::one();
            } else {
                out.upper = T::one();
            }
            return out;
        }
        let mut out = if v <= T::lit(GH_MAX_VARIANCE) {
            self.hermite(x, v)
        } else {
            self.trapezoid(x, v)
        };
        out.cdf = out.cdf.min(T::one());
        out.upper = out.upper.min(T::one());
        out
    }

    fn hermite(&self, x: T, v: T) -> KernelValues<T> {
        let scale = (T::lit(2.0) * v).sqrt();
        let mut acc = KernelValues::zero();
        for (u, w) in self.rule.pairs() {
            let t = scale * u;
            acc.add_scaled(w, &logistic_closed(x - t).add(&logistic_closed(x + t)));
        }
        if let Some(w) = self.rule.centre_weight() {
            acc.add_scaled(w, &logistic_closed(x));
        }
        acc
    }

    fn trapezoid(&self, x: T, v: T) -> KernelValues<T> {
        let sd = v.sqrt();
        let n = (T::lit(TRAPEZOID_HALF_WIDTH) * sd / T::lit(TRAPEZOID_STEP))
            .ceil()
            .to_usize()
            .unwrap_or(1)
            .max(1);
        let h = T::lit(TRAPEZOID_HALF_WIDTH) * sd / T::from_usize(n).unwrap();
        let norm = h / (T::TAU() * v).sqrt();
        let two_v = T::lit(2.0) * v;
        let mut acc = KernelValues::zero();
        // outermost nodes first
        for j in (1..=n).rev() {
            let t = h * T::from_usize(j).unwrap();
            let w = norm * (-(t * t) / two_v).exp();
            acc.add_scaled(w, &logistic_closed(x - t).add(&logistic_closed(x + t)));
        }
        acc.add_scaled(norm, &logistic_closed(x));
        acc
    }
}

impl Kernel<f64> {
    /// Kernel with the default configuration.
    pub fn default_f64() -> Self {
        Self::new(KernelConfig::default()).expect("default kernel config is valid")
    }
}

/// Solution `μ` of `L_0(μ, v) = z`.
///
/// Brackets on `[−tail_cut·√(1+v), 0]` after reflecting to `z < ½`, bisects
/// to width 1e-3, then runs Newton steps with `L_1`, falling back to
/// bisection whenever a step leaves the bracket. `sign(μ) = sign(z − ½)`
/// holds exactly.
pub fn inverse_mu<T: Real>(kernel: &Kernel<T>, z: T, v: T) -> Result<T> {
    if !(z > T::zero() && z < T::one()) {
        return domain(format!("inverse_mu needs z in (0,1), got {z}"));
    }
    if !(v >= T::zero() && v.is_finite()) {
        return domain(format!("variance must be finite and >= 0, got {v}"));
    }
    let half = T::lit(0.5);
    if z == half {
        return Ok(T::zero());
    }
    if z > half {
        // 1 − z is exact here
        return inverse_mu(kernel, T::one() - z, v).map(|m| -m);
    }
    if v == T::zero() {
        let mu = z.ln() - (-z).ln_1p();
        return Ok(mu.min(-T::min_positive_value()));
    }
    let cfg = kernel.config();
    let mut lo = -cfg.tail_cut * (T::one() + v).sqrt();
    let mut hi = T::zero();
    let f = |m: T| kernel.values_at(KernelPoint { x: m, v });
    let f_lo = f(lo).cdf - z;
    if f_lo > T::zero() {
        return Err(Error::Convergence(format!(
            "z = {z} lies beyond the tail cutoff for v = {v}"
        )));
    }
    while hi - lo > T::lit(1e-3) {
        let mid = half * (lo + hi);
        if f(mid).cdf - z > T::zero() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let mut mu = half * (lo + hi);
    for _ in 0..200 {
        let vals = f(mu);
        let resid = vals.cdf - z;
        if resid == T::zero() {
            break;
        }
        if resid > T::zero() {
            hi = mu;
        } else {
            lo = mu;
        }
        let slope = vals.d[0];
        let newton = mu - resid / slope;
        let next = if slope > T::zero() && newton > lo && newton < hi {
            newton
        } else {
            half * (lo + hi)
        };
        let step = (next - mu).abs();
        mu = next;
        if step <= T::lit(4.0) * T::epsilon() * mu.abs() || hi - lo <= T::epsilon() * mu.abs() {
            break;
        }
    }
    let resid = (f(mu).cdf - z).abs();
    if resid > cfg.inv_tol {
        return Err(Error::Convergence(format!(
            "inverse_mu residual {resid} exceeds tolerance {}",
            cfg.inv_tol
        )));
    }
    Ok(mu.min(-T::min_positive_value()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn kernel() -> Kernel<f64> {
        Kernel::default_f64()
    }

    #[test]
    fn logistic_cdf_values() {
        assert_eq!(logistic_cdf(0.0f64).unwrap(), 0.5);
        let v = logistic_cdf(40.0f64).unwrap();
        assert!((v - (1.0 - (-40.0f64).exp())).abs() <= 1e-16);
        // 40-digit reference for e/(1+e)
        assert_relative_eq!(
            logistic_cdf(1.0f64).unwrap(),
            0.731_058_578_630_004_879_251_159_2,
            max_relative = 2e-16
        );
        assert!(logistic_cdf(f64::NAN).is_err());
        assert!(logistic_cdf(f64::INFINITY).is_err());
        assert_eq!(logistic_cdf(-800.0f64).unwrap(), 0.0);
        assert_eq!(logistic_cdf(800.0f64).unwrap(), 1.0);
    }

    #[test]
    fn closed_forms_match_textbook_expressions() {
        for &x in &[-3.0f64, -0.7, 0.0, 0.4, 2.5] {
            let e = x.exp();
            let d = 1.0 + e;
            let c = logistic_closed(x);
            assert_relative_eq!(c.cdf, e / d, max_relative = 1e-14);
            assert_relative_eq!(c.d[0], e / (d * d), max_relative = 1e-14);
            assert_relative_eq!(c.d[1], e * (1.0 - e) / d.powi(3), max_relative = 1e-12, epsilon = 1e-16);
            assert_relative_eq!(c.d[2], e * (1.0 - 4.0 * e + e * e) / d.powi(4), max_relative = 1e-12);
            assert_relative_eq!(
                c.d[3],
                e * (1.0 - e) * (1.0 - 10.0 * e + e * e) / d.powi(5),
                max_relative = 1e-12,
                epsilon = 1e-16
            );
            assert_relative_eq!(c.upper, 1.0 / d, max_relative = 1e-14);
        }
    }

    #[test]
    fn closed_forms_survive_huge_arguments() {
        for &x in &[-1e4f64, -750.0, 750.0, 1e4] {
            let c = logistic_closed(x);
            assert!(c.cdf.is_finite() && c.d.iter().all(|d| d.is_finite()));
        }
    }

    #[test]
    fn reference_point_examples() {
        let k = kernel();
        assert_eq!(k.l(0, 0.0, 3.7).unwrap(), 0.5);
        assert_eq!(k.l(1, 0.0, 0.0).unwrap(), 0.25);
        assert_eq!(k.l(2, 0.0, 1.0).unwrap(), 0.0);
        assert!(k.l(5, 0.0, 1.0).is_err());
        assert!(k.l(0, 0.0, -1.0).is_err());
        assert!(k.l(0, f64::NAN, 1.0).is_err());
    }

    fn l0_adaptive(x: f64, v: f64) -> f64 {
        let sd = v.sqrt();
        let dens = |t: f64| (-t * t / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt();
        integrate(
            |t: f64| dens(t) / (1.0 + (t - x).exp()),
            -40.0 * sd,
            40.0 * sd,
            1e-15,
            1e-14,
        )
        .unwrap()
        .value
    }

    #[test]
    fn l0_against_adaptive_quadrature() {
        let k = kernel();
        // extended-precision reference: 0.6967346701436832881981002
        let got = k.l(0, 1.0, 1.0).unwrap();
        assert!((got - 0.696_734_670_143_683_3).abs() < 1e-12);
        assert!((got - l0_adaptive(1.0, 1.0)).abs() < 1e-12);
        for &(x, v) in &[(-2.0, 0.3), (0.5, 2.5), (3.0, 16.0), (-7.0, 50.0)] {
            assert!((k.l(0, x, v).unwrap() - l0_adaptive(x, v)).abs() < 1e-12, "x={x} v={v}");
        }
    }

    #[test]
    fn derivatives_against_adaptive_quadrature() {
        let k = kernel();
        for &v in &[0.25, 1.0, 2.0, 4.0, 16.0, 60.0] {
            for &x in &[-5.0, -0.4, 0.0, 1.5, 8.0] {
                let got = k.values(x, v).unwrap();
                for j in 0..4 {
                    let sd = v.sqrt();
                    let r = integrate(
                        |t: f64| {
                            let w = (-t * t / (2.0 * v)).exp() / (std::f64::consts::TAU * v).sqrt();
                            w * logistic_closed(x - t).d[j]
                        },
                        -40.0 * sd,
                        40.0 * sd,
                        1e-17,
                        1e-15,
                    )
                    .unwrap()
                    .value;
                    assert!((got.d[j] - r).abs() < 1e-13, "k={} x={x} v={v}", j + 1);
                }
            }
        }
    }

    #[test]
    fn hermite_and_trapezoid_agree() {
        let k = kernel();
        // both rules are accurate around the switch-over variance
        for &v in &[0.5, 0.8, 1.0] {
            for &x in &[-4.0, -1.0, 0.3, 2.0, 6.0] {
                let a = k.hermite(x, v);
                let b = k.trapezoid(x, v);
                assert!((a.cdf - b.cdf).abs() < 1e-13, "v={v} x={x}");
                for j in 0..4 {
                    assert!((a.d[j] - b.d[j]).abs() < 1e-13, "k={} v={v} x={x}", j + 1);
                }
            }
        }
    }

    #[test]
    fn dldv_identity() {
        let k = kernel();
        let p = KernelPoint::new(0.0, 1.0).unwrap();
        assert_eq!(k.dl_dv(0, p).unwrap(), 0.0);
        let p = KernelPoint::new(1.0, 1.0).unwrap();
        let h = 1e-4;
        let fd = (k.l(0, 1.0, 1.0 + h).unwrap() - k.l(0, 1.0, 1.0 - h).unwrap()) / (2.0 * h);
        assert_relative_eq!(k.dl_dv(0, p).unwrap(), fd, max_relative = 1e-5);
        let p = KernelPoint::new(2.0, 0.5).unwrap();
        assert_eq!(k.dl_dv(2, p).unwrap(), 0.5 * k.l(4, 2.0, 0.5).unwrap());
        assert!(k.dl_dv(3, p).is_err());
    }

    #[test]
    fn tail_clamp() {
        let k = kernel();
        let v = 3.0;
        let x = 39.0 * 2.0;
        let vals = k.values(x, v).unwrap();
        assert_eq!(vals.cdf, 1.0);
        assert_eq!(vals.d, [0.0; 4]);
        assert_eq!(k.l(0, -x, v).unwrap(), 0.0);
    }

    #[test]
    fn config_validation() {
        let mut cfg = KernelConfig::<f64>::default();
        cfg.quad_order = 8;
        assert!(Kernel::new(cfg).is_err());
        let mut cfg = KernelConfig::<f64>::default();
        cfg.inv_tol = 1e-3;
        assert!(Kernel::new(cfg).is_err());
        cfg.inv_tol = 0.0;
        assert!(Kernel::new(cfg).is_err());
    }

    #[test]
    fn inverse_examples() {
        let k = kernel();
        assert_eq!(inverse_mu(&k, 0.5, 2.0).unwrap(), 0.0);
        let z = logistic_cdf(1.3).unwrap();
        assert!((inverse_mu(&k, z, 0.0).unwrap() - 1.3).abs() < 1e-13);
        // bisection oracle
        let (mut a, mut b) = (0.0f64, 20.0f64);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if k.l(0, m, 1.0).unwrap() > 0.8 {
                b = m
            } else {
                a = m
            }
        }
        let got = inverse_mu(&k, 0.8, 1.0).unwrap();
        assert!((got - 0.5 * (a + b)).abs() < 1e-12);
        // extended-precision reference 1.64970336551537490994561
        assert!((got - 1.649_703_365_515_375).abs() < 1e-12);
        assert!(inverse_mu(&k, 0.0, 1.0).is_err());
        assert!(inverse_mu(&k, 1.0, 1.0).is_err());
        assert!(inverse_mu(&k, 1e-300, 1.0).is_err());
    }

    #[test]
    fn inverse_sign_is_exact_near_half() {
        let k = kernel();
        let z = 0.5 + f64::EPSILON / 2.0;
        assert!(inverse_mu(&k, z, 1.0).unwrap() > 0.0);
        let z = 0.5 - f64::EPSILON / 4.0;
        assert!(inverse_mu(&k, z, 0.0).unwrap() < 0.0);
    }

    #[test]
    fn f32_kernel_is_usable() {
        let cfg = KernelConfig::<f32> {
            quad_order: 32,
            inv_tol: 1e-6,
            tail_cut: 20.0,
        };
        let k = Kernel::new(cfg).unwrap();
        assert!((k.l(0, 1.0, 1.0).unwrap() - 0.696_734_7).abs() < 1e-5);
        assert!((inverse_mu(&k, 0.8f32, 1.0).unwrap() - 1.649_703_4).abs() < 1e-4);
    }

    proptest! {
        #[test]
        fn parity(x in -30.0f64..30.0, v in 0.0f64..100.0) {
            let k = kernel();
            let a = k.values(x, v).unwrap();
            let b = k.values(-x, v).unwrap();
            prop_assert_eq!(a.cdf, b.upper);
            for j in 0..4 {
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                prop_assert!((a.d[j] - sign * b.d[j]).abs() <= 1e-12);
            }
        }

        #[test]
        fn cdf_increasing_and_density_positive(x in -20.0f64..20.0, dx in 1e-3f64..1.0, v in 0.0f64..50.0) {
            let k = kernel();
            prop_assert!(k.l(0, x + dx, v).unwrap() > k.l(0, x, v).unwrap());
            prop_assert!(k.l(1, x, v).unwrap() > 0.0);
        }

        #[test]
        fn bounded(x in -50.0f64..50.0, v in 0.0f64..100.0) {
            let vals = kernel().values(x, v).unwrap();
            prop_assert!(vals.cdf.is_finite() && (0.0..=1.0).contains(&vals.cdf));
            for d in vals.d { prop_assert!(d.is_finite()); }
        }

        #[test]
        fn inverse_round_trip(x in -10.0f64..10.0, v in 0.0f64..20.0) {
            let k = kernel();
            let z = k.l(0, x, v).unwrap();
            let back = inverse_mu(&k, z, v).unwrap();
            // z carries rounding of order ε; map it back through the density
            let slack = 10.0 * 1e-13 + 4.0 * f64::EPSILON / k.l(1, x, v).unwrap();
            prop_assert!((back - x).abs() <= slack, "x={} back={}", x, back);
        }
    }
}
