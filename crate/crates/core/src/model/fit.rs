use serde::Serialize;

use crate::error::{domain, Result};
use crate::identify::Theorem;
use crate::kernel::Kernel;
use crate::report::{sig17, sig17_opt};
use crate::scalar::Real;

use super::likelihood::accumulate;
use super::{Dataset, Theta};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Convergence threshold on the Euclidean norm of the gradient.
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Iteration stops once `|b0|`, `|b1|` or `s` exceeds this.
    pub divergence_bound: f64,
    /// Starting `s` for the unknown-τ² fit when no initial point is given.
    pub s_init: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            grad_tol: 1e-8,
            max_iter: 200,
            divergence_bound: 1e3,
            s_init: 0.1,
        }
    }
}

impl FitOptions {
    fn validate(&self) -> Result<()> {
        if !(self.grad_tol > 0.0 && self.grad_tol.is_finite()) {
            return domain(format!("grad_tol must be positive, got {}", self.grad_tol));
        }
        if !(self.divergence_bound > 0.0) {
            return domain("divergence bound must be positive");
        }
        if !(self.s_init >= 0.0 && self.s_init.is_finite()) {
            return domain(format!("s_init must be >= 0, got {}", self.s_init));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct EstimateOut<T: Real> {
    #[serde(serialize_with = "sig17")]
    b0: T,
    #[serde(serialize_with = "sig17")]
    b1: T,
    #[serde(serialize_with = "sig17")]
    s: T,
}

fn ser_estimate<T: Real, S: serde::Serializer>(t: &Theta<T>, s: S) -> std::result::Result<S::Ok, S::Error> {
    EstimateOut {
        b0: t.b0,
        b1: t.b1,
        s: t.s,
    }
    .serialize(s)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "")]
pub struct FitResult<T: Real> {
    /// Reduced estimate `(b0, b1, s = b1²τ²)`.
    #[serde(serialize_with = "ser_estimate")]
    pub estimate: Theta<T>,
    #[serde(serialize_with = "sig17_opt", skip_serializing_if = "Option::is_none")]
    pub tau2_known: Option<T>,
    #[serde(serialize_with = "sig17")]
    pub loglik: T,
    pub iterations: usize,
    pub converged: bool,
    /// Gradient norm in the optimiser's own coordinates.
    #[serde(serialize_with = "sig17")]
    pub gradient_norm: T,
    pub warnings: Vec<String>,
}

/// Maps optimiser coordinates to `(b0, b1, s)` and pulls the gradient back.
#[derive(Clone, Copy)]
enum Param<T> {
    /// `p = (b0, b1)`, `s = b1²τ²`.
    Known(T),
    /// `p = (b0, b1, r)`, `s = r²`.
    Unknown,
}

impl<T: Real> Param<T> {
    fn theta(self, p: &[T]) -> Theta<T> {
        match self {
            Param::Known(t2) => Theta {
                b0: p[0],
                b1: p[1],
                s: p[1] * p[1] * t2,
            },
            Param::Unknown => Theta {
                b0: p[0],
                b1: p[1],
                s: p[2] * p[2],
            },
        }
    }

    fn pull_back(self, p: &[T], g: [T; 3]) -> Vec<T> {
        let two = T::lit(2.0);
        match self {
            Param::Known(t2) => vec![g[0], g[1] + two * p[1] * t2 * g[2]],
            Param::Unknown => vec![g[0], g[1], two * p[2] * g[2]],
        }
    }
}

struct Objective<'a, T: Real> {
    kernel: &'a Kernel<T>,
    data: &'a Dataset<T>,
    param: Param<T>,
}

impl<T: Real> Objective<'_, T> {
    fn value_grad(&self, p: &[T]) -> Result<(T, Vec<T>)> {
        let a = accumulate(self.kernel, &self.param.theta(p), self.data, true)?;
        Ok((a.loglik, self.param.pull_back(p, a.grad)))
    }

    /// Central differences of the analytic gradient, symmetrised.
    fn hessian(&self, p: &[T]) -> Result<Vec<Vec<T>>> {
        let n = p.len();
        let mut h = vec![vec![T::zero(); n]; n];
        for j in 0..n {
            let step = T::lit(1e-5) * p[j].abs().max(T::one());
            let mut hi = p.to_vec();
            let mut lo = p.to_vec();
            hi[j] = p[j] + step;
            lo[j] = p[j] - step;
            let (_, gh) = self.value_grad(&hi)?;
            let (_, gl) = self.value_grad(&lo)?;
            let width = hi[j] - lo[j];
            for i in 0..n {
                h[i][j] = (gh[i] - gl[i]) / width;
            }
        }
        for i in 0..n {
            for j in 0..i {
                let m = T::lit(0.5) * (h[i][j] + h[j][i]);
                h[i][j] = m;
                h[j][i] = m;
            }
        }
        Ok(h)
    }
}

fn norm<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |acc, &x| acc.hypot(x))
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Solves `a·x = b` for symmetric positive definite `a`; `None` if not PD.
fn cholesky_solve<T: Real>(a: &[Vec<T>], b: &[T]) -> Option<Vec<T>> {
    let n = b.len();
    let mut l = vec![vec![T::zero(); n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i][j];
            for k in 0..j {
                sum = sum - l[i][k] * l[j][k];
            }
            if i == j {
                if !(sum > T::zero()) {
                    return None;
                }
                l[i][i] = sum.sqrt();
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    let mut y = vec![T::zero(); n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum = sum - l[i][k] * y[k];
        }
        y[i] = sum / l[i][i];
    }
    let mut x = vec![T::zero(); n];
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in i + 1..n {
            sum = sum - l[k][i] * x[k];
        }
        x[i] = sum / l[i][i];
    }
    Some(x)
}

/// Ascent direction solving `(−H + λI)d = g` with the smallest λ in a doubling
/// sequence that makes the system positive definite.
fn newton_direction<T: Real>(h: &[Vec<T>], g: &[T]) -> Vec<T> {
    let n = g.len();
    let neg: Vec<Vec<T>> = h.iter().map(|row| row.iter().map(|&x| -x).collect()).collect();
    if let Some(d) = cholesky_solve(&neg, g) {
        return d;
    }
    let scale = h
        .iter()
        .flat_map(|r| r.iter())
        .fold(T::zero(), |m, &x| m.max(x.abs()))
        .max(T::one());
    let mut lambda = T::lit(1e-8) * scale;
    for _ in 0..200 {
        let mut a = neg.clone();
        for (i, row) in a.iter_mut().enumerate().take(n) {
            row[i] = row[i] + lambda;
        }
        if let Some(d) = cholesky_solve(&a, g) {
            return d;
        }
        lambda = lambda * T::lit(4.0);
    }
    // steepest ascent scaled to unit length
    let gn = norm(g).max(T::min_positive_value());
    g.iter().map(|&x| x / gn).collect()
}

/// Complete or quasi-complete separation of the labels by a threshold on x0.
fn separated<T: Real>(data: &Dataset<T>) -> bool {
    let (mut min1, mut max1) = (T::infinity(), T::neg_infinity());
    let (mut min0, mut max0) = (T::infinity(), T::neg_infinity());
    for r in &data.rows {
        if r.y == 1 {
            min1 = min1.min(r.x0);
            max1 = max1.max(r.x0);
        } else {
            min0 = min0.min(r.x0);
            max0 = max0.max(r.x0);
        }
    }
    if !min1.is_finite() || !min0.is_finite() {
        return true;
    }
    max0 <= min1 || max1 <= min0
}

struct Outcome<T> {
    p: Vec<T>,
    loglik: T,
    grad_norm: T,
    iterations: usize,
    converged: bool,
    warnings: Vec<String>,
}

fn maximise<T: Real>(obj: &Objective<'_, T>, start: Vec<T>, opts: &FitOptions) -> Result<Outcome<T>> {
    let tol = T::lit(opts.grad_tol);
    let bound = T::lit(opts.divergence_bound);
    let mut p = start;
    let (mut ll, mut g) = obj.value_grad(&p)?;
    let mut gn = norm(&g);
    let mut warnings = Vec::new();
    let mut iterations = 0;
    while gn > tol {
        if iterations >= opts.max_iter {
            warnings.push(format!("no convergence after {} iterations", opts.max_iter));
            break;
        }
        if p[0].abs() > bound || p[1].abs() > bound {
            warnings.push(format!(
                "coefficients diverging (|b0| or |b1| > {}); the data look separated",
                opts.divergence_bound
            ));
            break;
        }
        if obj.param.theta(&p).s > bound {
            warnings.push(format!(
                "smoothing variance diverging (s > {}); s is not identified by these data",
                opts.divergence_bound
            ));
            break;
        }
        iterations += 1;
        let h = obj.hessian(&p)?;
        let d = newton_direction(&h, &g);
        let slope = dot(&g, &d);
        // below this the change in log-likelihood is lost in rounding
        let noise = T::lit(1e-12) * ll.abs().max(T::one());
        let mut t = T::one();
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<T> = p.iter().zip(&d).map(|(&a, &b)| a + t * b).collect();
            let (llt, gt) = obj.value_grad(&trial)?;
            if llt.is_finite() {
                let armijo = llt > ll && llt >= ll + T::lit(1e-4) * t * slope;
                let polish = t * slope <= noise && llt >= ll - noise && norm(&gt) < gn;
                if armijo || polish {
                    accepted = Some((trial, llt, gt));
                    break;
                }
            }
            t = t * T::lit(0.5);
        }
        match accepted {
            Some((np, nll, ng)) => {
                p = np;
                ll = nll;
                gn = norm(&ng);
                g = ng;
            }
            None => {
                warnings.push("line search failed to make progress".to_string());
                break;
            }
        }
    }
    Ok(Outcome {
        p,
        loglik: ll,
        grad_norm: gn,
        iterations,
        converged: gn <= tol,
        warnings,
    })
}

fn check_inputs<T: Real>(kernel: &Kernel<T>, data: &Dataset<T>, opts: &FitOptions, theorem: Theorem) -> Result<Vec<String>> {
    let _ = kernel;
    opts.validate()?;
    if data.is_empty() {
        return domain("dataset is empty");
    }
    let mut warnings = Vec::new();
    let distinct = data.distinct_x0();
    if distinct < theorem.threshold() {
        warnings.push(format!(
            "design has {distinct} distinct x0 values; at least {} are needed for the identifiability guarantee",
            theorem.threshold()
        ));
    }
    if separated(data) {
        warnings.push("labels are separated by x0; the maximum likelihood estimate does not exist".to_string());
    }
    Ok(warnings)
}

fn finish<T: Real>(
    param: Param<T>,
    out: Outcome<T>,
    mut warnings: Vec<String>,
    separated: bool,
    tau2_known: Option<T>,
) -> FitResult<T> {
    let mut estimate = param.theta(&out.p);
    estimate.s = estimate.s.abs();
    warnings.extend(out.warnings);
    FitResult {
        estimate,
        tau2_known,
        loglik: out.loglik,
        iterations: out.iterations,
        converged: out.converged && !separated,
        gradient_norm: out.grad_norm,
        warnings,
    }
}

/// Maximum likelihood for `(b0, b1)` with τ² known, `s = b1²τ²`.
///
/// `init` defaults to the ordinary logistic fit (τ² = 0), which in turn starts at
/// the origin.
pub fn fit_known_tau<T: Real>(
    kernel: &Kernel<T>,
    data: &Dataset<T>,
    tau2: T,
    init: Option<(T, T)>,
    opts: &FitOptions,
) -> Result<FitResult<T>> {
    if !(tau2 >= T::zero() && tau2.is_finite()) {
        return domain(format!("tau2 must be finite and >= 0, got {tau2}"));
    }
    let warnings = check_inputs(kernel, data, opts, Theorem::FuncKnownTau)?;
    let sep = separated(data);
    let start = match init {
        Some((b0, b1)) => vec![b0, b1],
        None if tau2 == T::zero() => vec![T::zero(), T::zero()],
        None => naive(kernel, data, opts)?,
    };
    if start.iter().any(|x| !x.is_finite()) {
        return domain("initial values must be finite");
    }
    let param = Param::Known(tau2);
    let obj = Objective { kernel, data, param };
    let out = maximise(&obj, start, opts)?;
    Ok(finish(param, out, warnings, sep, Some(tau2)))
}

/// Maximum likelihood for the identified triple `(b0, b1, s)`; `s ≥ 0` is kept
/// by optimising over `r` with `s = r²`.
///
/// Without `init`, `(b0, b1)` start from the ordinary logistic fit and `s` from
/// `opts.s_init`.
pub fn fit_unknown_tau<T: Real>(
    kernel: &Kernel<T>,
    data: &Dataset<T>,
    init: Option<Theta<T>>,
    opts: &FitOptions,
) -> Result<FitResult<T>> {
    let warnings = check_inputs(kernel, data, opts, Theorem::FuncUnknownTau)?;
    let sep = separated(data);
    let (b, s0) = match init {
        Some(t) => (vec![t.b0, t.b1], t.s),
        None => (naive(kernel, data, opts)?, T::lit(opts.s_init)),
    };
    if b.iter().any(|x| !x.is_finite()) || !(s0 >= T::zero() && s0.is_finite()) {
        return domain("initial values must be finite with s >= 0");
    }
    // r = 0 is a stationary point in r, so start just off it
    let r0 = s0.sqrt().max(T::lit(1e-3));
    let param = Param::Unknown;
    let obj = Objective { kernel, data, param };
    let out = maximise(&obj, vec![b[0], b[1], r0], opts)?;
    Ok(finish(param, out, warnings, sep, None))
}

fn naive<T: Real>(kernel: &Kernel<T>, data: &Dataset<T>, opts: &FitOptions) -> Result<Vec<T>> {
    let obj = Objective {
        kernel,
        data,
        param: Param::Known(T::zero()),
    };
    let out = maximise(&obj, vec![T::zero(), T::zero()], opts)?;
    Ok(out.p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{simulate, Design, ModelParams};

    fn kernel() -> Kernel<f64> {
        Kernel::default_f64()
    }

    fn fixture200() -> Dataset<f64> {
        let text = include_str!("../../tests/fixtures/logit200.csv");
        Dataset::read_csv(text.as_bytes(), "logit200.csv").unwrap()
    }

    // Independent IRLS reference for ordinary logistic regression.
    fn irls(data: &Dataset<f64>) -> (f64, f64) {
        let (mut b0, mut b1): (f64, f64) = (0.0, 0.0);
        for _ in 0..100 {
            let (mut a00, mut a01, mut a11, mut r0, mut r1) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
            for r in &data.rows {
                let eta = b0 + b1 * r.x0;
                let p = 1.0 / (1.0 + (-eta).exp());
                let w = p * (1.0 - p);
                let z = eta + (r.y as f64 - p) / w;
                a00 += w;
                a01 += w * r.x0;
                a11 += w * r.x0 * r.x0;
                r0 += w * z;
                r1 += w * r.x0 * z;
            }
            let det = a00 * a11 - a01 * a01;
            let n0 = (a11 * r0 - a01 * r1) / det;
            let n1 = (a00 * r1 - a01 * r0) / det;
            let done = (n0 - b0).abs() + (n1 - b1).abs() < 1e-15;
            b0 = n0;
            b1 = n1;
            if done {
                break;
            }
        }
        (b0, b1)
    }

    #[test]
    fn tau_zero_fit_matches_irls() {
        let k = kernel();
        let d = fixture200();
        assert_eq!(d.len(), 200);
        let (b0, b1) = irls(&d);
        let f = fit_known_tau(&k, &d, 0.0, None, &FitOptions::default()).unwrap();
        assert!(f.converged, "{f:?}");
        assert!((f.estimate.b0 - b0).abs() < 1e-6 && (f.estimate.b1 - b1).abs() < 1e-6);
        assert_eq!(f.estimate.s, 0.0);
        assert!(f.gradient_norm <= 1e-8);
    }

    #[test]
    fn all_ones_is_flagged_as_separated() {
        let k = kernel();
        let d = Dataset::from_pairs(&[(0.0, 1), (1.0, 1), (2.0, 1), (3.0, 1)]).unwrap();
        let f = fit_known_tau(&k, &d, 0.5, None, &FitOptions::default()).unwrap();
        assert!(!f.converged);
        assert!(f.warnings.iter().any(|w| w.contains("separated")));
        let d = Dataset::from_pairs(&[(0.0, 0), (1.0, 0), (2.0, 1), (3.0, 1)]).unwrap();
        let f = fit_unknown_tau(&k, &d, None, &FitOptions::default()).unwrap();
        assert!(!f.converged);
    }

    #[test]
    fn sparse_design_warns_but_fits() {
        let k = kernel();
        let p = ModelParams::new(0.3, 1.2, 0.25).unwrap();
        let xs: Vec<f64> = (0..3000).map(|i| [-1.0, 0.0, 1.5][i % 3]).collect();
        let d = simulate(&k, &p, &Design::Functional(xs), 3).unwrap();
        let f = fit_unknown_tau(&k, &d, None, &FitOptions::default()).unwrap();
        assert!(f.warnings.iter().any(|w| w.contains("3 distinct")), "{:?}", f.warnings);
        assert!(f.loglik.is_finite());
        let f = fit_known_tau(&k, &d, 0.25, None, &FitOptions::default()).unwrap();
        assert!(f.converged && f.warnings.is_empty(), "{f:?}");
    }

    #[test]
    fn iterations_increase_loglik() {
        let k = kernel();
        let d = fixture200();
        let mut prev = crate::model::log_likelihood(&k, &Theta::new(0.0, 0.0, 0.25).unwrap(), &d).unwrap();
        for max_iter in 1..6 {
            let opts = FitOptions { max_iter, ..FitOptions::default() };
            let f = fit_unknown_tau(&k, &d, Some(Theta::new(0.0, 0.0, 0.25).unwrap()), &opts).unwrap();
            assert!(f.loglik >= prev, "{max_iter}");
            prev = f.loglik;
        }
    }

    #[test]
    fn json_fields() {
        let k = kernel();
        let d = fixture200();
        let f = fit_known_tau(&k, &d, 0.5, None, &FitOptions::default()).unwrap();
        let v: serde_json::Value = serde_json::from_str(&crate::report::to_json(&f)).unwrap();
        for key in ["estimate", "tau2_known", "loglik", "iterations", "converged", "gradient_norm"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert!(v["estimate"]["s"].is_number());
        let f = fit_unknown_tau(&k, &d, None, &FitOptions::default()).unwrap();
        let v: serde_json::Value = serde_json::from_str(&crate::report::to_json(&f)).unwrap();
        assert!(v.get("tau2_known").is_none());
    }

    #[test]
    fn cholesky_handles_indefinite() {
        let h = vec![vec![1.0, 0.0], vec![0.0, -2.0]];
        let d = newton_direction(&h, &[1.0, 1.0]);
        assert!(dot(&[1.0, 1.0], &d) > 0.0);
        let a = vec![vec![4.0, 1.0], vec![1.0, 3.0]];
        let x = cholesky_solve(&a, &[1.0, 2.0]).unwrap();
        assert!((4.0f64 * x[0] + x[1] - 1.0).abs() < 1e-15 && (x[0] + 3.0f64 * x[1] - 2.0).abs() < 1e-15);
    }
}
