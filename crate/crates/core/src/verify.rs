//! Numerical certificates for the kernel inequalities: the sign of the key
//! expression, the third-derivative/conditional-moment identity, the link
//! curvature law and the auxiliary `F(y)` comparisons.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::identify::link_curvature_sign;
use crate::kernel::Kernel;
use crate::quadrature::integrate;
use crate::report::{sig17, sig17_opt};
use crate::scalar::{signum0, Real};

/// `L₄L₁² − 3L₃L₂L₁ + 2L₂³` at `(x, v)`.
pub fn key_expression<T: Real>(kernel: &Kernel<T>, x: T, v: T) -> Result<T> {
    let [l1, l2, l3, l4] = kernel.values(x, v)?.d;
    Ok(key_terms(l1, l2, l3, l4).0)
}

/// The key expression and the largest of its three terms in magnitude.
fn key_terms<T: Real>(l1: T, l2: T, l3: T, l4: T) -> (T, T) {
    let a = l4 * l1 * l1;
    let b = T::lit(3.0) * l3 * l2 * l1;
    let c = T::lit(2.0) * l2 * l2 * l2;
    (a - b + c, a.abs().max(b.abs()).max(c.abs()))
}

/// `d³/dx³ ln L_1(x, v)`, i.e. the key expression over `L_1³`.
pub fn log_density_d3<T: Real>(kernel: &Kernel<T>, x: T, v: T) -> Result<T> {
    if !(v > T::zero()) {
        return domain(format!("log_density_d3 needs v > 0, got {v}"));
    }
    let [l1, l2, l3, l4] = kernel.values(x, v)?.d;
    Ok(key_terms(l1, l2, l3, l4).0 / (l1 * l1 * l1))
}

/// Log of the standard logistic density, `ln ℓ(y) = −|y| − 2 ln(1 + e^{−|y|})`.
fn ln_logistic_density<T: Real>(y: T) -> T {
    let a = y.abs();
    -a - T::lit(2.0) * (-a).exp().ln_1p()
}

/// Exponent of the conditional density of `η` given `η + ξ = x`, where `η` is
/// standard logistic and `ξ ~ N(0, v)`, together with its first two derivatives.
#[derive(Debug, Clone, Copy)]
struct Exponent<T> {
    x: T,
    v: T,
}

impl<T: Real> Exponent<T> {
    fn f(&self, y: T) -> T {
        let d = y - self.x;
        ln_logistic_density(y) - d * d / (T::lit(2.0) * self.v)
    }

    /// `1 − 2eʸ/(eʸ+1) − (y−x)/v`.
    fn f1(&self, y: T) -> T {
        (-y / T::lit(2.0)).tanh() - (y - self.x) / self.v
    }

    /// `−2eʸ/(eʸ+1)² − 1/v`.
    fn f2(&self, y: T) -> T {
        let q = (-y.abs()).exp();
        let d = T::one() + q;
        -T::lit(2.0) * q / (d * d) - T::one() / self.v
    }

    /// Root of the strictly decreasing `F′ − target` inside `[lo, hi]`.
    fn solve_f1(&self, target: T, mut lo: T, mut hi: T) -> Result<T> {
        let g = |y: T| self.f1(y) - target;
        if !(g(lo) >= T::zero() && g(hi) <= T::zero()) {
            return Err(Error::Convergence(format!(
                "F' - {target} is not bracketed by [{lo}, {hi}]"
            )));
        }
        let mut y = (lo + hi) / T::lit(2.0);
        for _ in 0..200 {
            let gy = g(y);
            if gy == T::zero() {
                return Ok(y);
            }
            if gy > T::zero() {
                lo = y;
            } else {
                hi = y;
            }
            let newton = y - gy / self.f2(y);
            let next = if newton > lo && newton < hi {
                newton
            } else {
                (lo + hi) / T::lit(2.0)
            };
            if (next - y).abs() <= T::epsilon() * y.abs().max(T::one()) || hi - lo <= T::epsilon() * lo.abs().max(hi.abs()) {
                return Ok(next);
            }
            y = next;
        }
        Ok(y)
    }

    /// Unique zero `y0` of `F′`, which lies in `[x − v, x + v]`.
    fn mode(&self) -> Result<T> {
        self.solve_f1(T::zero(), self.x - self.v, self.x + self.v)
    }
}

/// Third central moment of `η` given `η + ξ = x`, with `η` standard logistic and
/// `ξ ~ N(0, v)`.
///
/// The integrals run over `|y − x| ≤ 40√v`, split at the mode.
pub fn conditional_mu3<T: Real>(x: T, v: T) -> Result<T> {
    if !(v > T::zero() && v.is_finite()) {
        return domain(format!("conditional_mu3 needs v > 0, got {v}"));
    }
    if !x.is_finite() {
        return domain("x must be finite");
    }
    let e = Exponent { x, v };
    let y0 = e.mode()?;
    let f0 = e.f(y0);
    let half = T::lit(40.0) * v.sqrt();
    let (lo, hi) = (x - half, x + half);
    let weight = |y: T| (e.f(y) - f0).exp();
    let moment = |g: &dyn Fn(T) -> T| -> Result<T> {
        let tol = T::lit(1e-15);
        let a = integrate(|y| g(y) * weight(y), lo, y0, T::zero(), tol)?;
        let b = integrate(|y| g(y) * weight(y), y0, hi, T::zero(), tol)?;
        Ok(a.value + b.value)
    };
    let z = moment(&|_| T::one())?;
    let m1 = moment(&|y| y)? / z;
    let c3 = moment(&|y| {
        let d = y - m1;
        d * d * d
    })?;
    Ok(c3 / z)
}

/// `F(y) = ln ℓ(y) − (y − x)²/(2v)` for fixed `x > 0`, `v > 0`, with its mode.
#[derive(Debug, Clone, Copy)]
pub struct FContext<T> {
    pub x: T,
    pub v: T,
    /// Unique zero of `F′`.
    pub y0: T,
}

impl<T: Real> FContext<T> {
    pub fn new(x: T, v: T) -> Result<Self> {
        if !(x > T::zero() && x.is_finite()) {
            return domain(format!("F context needs x > 0, got {x}"));
        }
        if !(v > T::zero() && v.is_finite()) {
            return domain(format!("F context needs v > 0, got {v}"));
        }
        let y0 = Exponent { x, v }.mode()?;
        Ok(Self { x, v, y0 })
    }

    fn exponent(&self) -> Exponent<T> {
        Exponent { x: self.x, v: self.v }
    }

    pub fn f(&self, y: T) -> T {
        self.exponent().f(y)
    }

    pub fn f1(&self, y: T) -> T {
        self.exponent().f1(y)
    }

    pub fn f2(&self, y: T) -> T {
        self.exponent().f2(y)
    }
}

/// Margins of the four comparisons between `y3 < y0` and its mirror `y4`.
///
/// Each margin is positive exactly when the corresponding inequality holds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuxFOutcome<T> {
    pub y3: T,
    pub y4: T,
    /// `min(y0 − y3, y4 − y0, F′(y3))`.
    pub order: T,
    /// `y3 + y4`.
    pub sum: T,
    /// `min(F″(y4) − F″(y3), −F″(y4))`.
    pub curvature: T,
    /// `F(y3) − F(y4)`.
    pub level: T,
    /// `|F′(y3) + F′(y4)|`.
    pub slope_residual: T,
}

impl<T: Real> AuxFOutcome<T> {
    pub fn margins(&self) -> [T; 4] {
        [self.order, self.sum, self.curvature, self.level]
    }

    pub fn min_margin(&self) -> T {
        self.margins().into_iter().fold(T::infinity(), T::min)
    }
}

/// Finds `y4 > y0` with `F′(y4) = −F′(y3)` and measures the four comparisons.
pub fn aux_f_check<T: Real>(ctx: &FContext<T>, y3: T) -> Result<AuxFOutcome<T>> {
    if !(y3 < ctx.y0) {
        return domain(format!("y3 must be below y0 = {}, got {y3}", ctx.y0));
    }
    let c = ctx.f1(y3);
    // F′(y) < 1 − (y − x)/v, so F′ < −c beyond x + v(1 + c)
    let hi = ctx.x + ctx.v * (T::lit(2.0) + c);
    let y4 = ctx.exponent().solve_f1(-c, ctx.y0, hi)?;
    let f1 = |y: T| ctx.f1(y);
    // F(y3) − F(y4) = −∫ F′ over [y3, y4]; both halves around y0 are smooth
    let tol = T::lit(1e-15);
    let left = integrate(f1, y3, ctx.y0, T::zero(), tol)?.value;
    let right = integrate(f1, ctx.y0, y4, T::zero(), tol)?.value;
    let level = -(left + right);
    let (d3, d4) = (ctx.f2(y3), ctx.f2(y4));
    Ok(AuxFOutcome {
        y3,
        y4,
        order: (ctx.y0 - y3).min(y4 - ctx.y0).min(c),
        sum: y3 + y4,
        curvature: (d4 - d3).min(-d4),
        level,
        slope_residual: (c + ctx.f1(y4)).abs(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Lemma {
    KeyInequality,
    ThirdDerivIdentity,
    CurvatureSign,
    AuxF,
}

impl Lemma {
    pub const ALL: [Lemma; 4] = [
        Lemma::KeyInequality,
        Lemma::ThirdDerivIdentity,
        Lemma::CurvatureSign,
        Lemma::AuxF,
    ];

    pub fn cli_name(self) -> &'static str {
        match self {
            Lemma::KeyInequality => "key-inequality",
            Lemma::ThirdDerivIdentity => "third-deriv",
            Lemma::CurvatureSign => "curvature-sign",
            Lemma::AuxF => "aux-f",
        }
    }

    /// Grid used when none is given.
    pub fn default_grid(self) -> Grid {
        let sym = |xs: &[f64]| {
            let mut out: Vec<f64> = xs.iter().rev().map(|x| -x).collect();
            out.extend_from_slice(xs);
            out
        };
        match self {
            Lemma::KeyInequality => {
                let mut x = sym(&[0.1, 0.5, 1.0, 2.0, 5.0, 10.0]);
                x.insert(6, 0.0);
                Grid::new(x, vec![0.0, 0.25, 1.0, 4.0, 16.0], vec![])
            }
            Lemma::ThirdDerivIdentity => Grid::new(range(-5.0, 5.0, 0.5), vec![0.5, 1.0, 2.0], vec![]),
            Lemma::CurvatureSign => Grid::new(
                sym(&[0.01, 0.5, 1.0, 2.0, 5.0]),
                vec![0.0, 0.25, 1.0, 4.0, 9.0],
                vec![],
            ),
            Lemma::AuxF => Grid::new(
                vec![0.1, 0.5, 1.0, 2.0, 5.0],
                vec![0.25, 1.0, 4.0],
                vec![3.0, 1.0, 0.1],
            ),
        }
    }

    /// Declared tolerance on `max_violation`.
    pub fn tolerance(self) -> f64 {
        match self {
            Lemma::ThirdDerivIdentity => THIRD_DERIV_REL_TOL,
            _ => 0.0,
        }
    }
}

impl fmt::Display for Lemma {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.cli_name())
    }
}

impl FromStr for Lemma {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Lemma::ALL
            .into_iter()
            .find(|l| l.cli_name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Lemma::ALL.iter().map(|l| l.cli_name()).collect();
                Error::Domain(format!("unknown lemma `{s}`, expected one of {}", names.join(", ")))
            })
    }
}

/// Strict-sign margin of the key expression relative to its largest term.
pub const KEY_REL_MARGIN: f64 = 1e-9;
/// `|key_expression(0, v)|` must stay below this.
pub const KEY_ZERO_TOL: f64 = 1e-12;
/// Below this `|x|` only the sign of the key expression is checked.
pub const KEY_MARGIN_MIN_ABS_X: f64 = 0.1;
pub const THIRD_DERIV_REL_TOL: f64 = 1e-4;
/// Absolute floor for the denominator of relative discrepancies.
pub const REL_ATOL: f64 = 1e-9;
/// Required margin for the F comparisons once `y0 − y3 ≥ AUX_STRICT_GAP`.
pub const AUX_MARGIN: f64 = 1e-12;
pub const AUX_STRICT_GAP: f64 = 1e-3;
/// Smallest `|x|` and `|s1 − s2|` at which the curvature law is checked.
pub const CURVATURE_MIN_ABS_X: f64 = 0.01;
pub const CURVATURE_MIN_GAP: f64 = 1e-3;

/// Axes of a certification sweep. `x` and `v` are always used; `d` holds the
/// offsets `y0 − y3` for the F check. The curvature law reads `v` as the
/// values of both `s1` and `s2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub d: Vec<f64>,
}

fn range(a: f64, b: f64, h: f64) -> Vec<f64> {
    let n = ((b - a) / h + 1e-9).floor() as usize;
    (0..=n).map(|i| a + i as f64 * h).collect()
}

fn axis(spec: &str) -> Result<Vec<f64>> {
    let num = |t: &str| -> Result<f64> {
        let v: f64 = t
            .trim()
            .parse()
            .map_err(|_| Error::Domain(format!("bad number `{t}` in grid axis `{spec}`")))?;
        if !v.is_finite() {
            return domain(format!("grid values must be finite, got `{t}`"));
        }
        Ok(v)
    };
    if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return domain(format!("range axis must be A:B:STEP, got `{spec}`"));
        }
        let (a, b, h) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
        if !(h > 0.0) || b < a {
            return domain(format!("range axis needs A <= B and STEP > 0, got `{spec}`"));
        }
        if (b - a) / h > 1e6 {
            return domain(format!("range axis `{spec}` has too many points"));
        }
        Ok(range(a, b, h))
    } else {
        spec.split(',').filter(|t| !t.trim().is_empty()).map(num).collect()
    }
}

impl Grid {
    pub fn new(x: Vec<f64>, v: Vec<f64>, d: Vec<f64>) -> Self {
        Self { x, v, d }
    }

    /// Parses `x=AXIS;v=AXIS;d=AXIS`, where an axis is `A:B:STEP` or a comma
    /// list. Axes that are left out come from `base`.
    pub fn parse_with_defaults(spec: &str, base: Grid) -> Result<Self> {
        let mut g = base;
        for part in spec.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let (name, values) = part
                .split_once('=')
                .ok_or_else(|| Error::Domain(format!("grid part `{part}` must be NAME=VALUES")))?;
            let values = axis(values)?;
            match name.trim() {
                "x" => g.x = values,
                "v" | "s" => g.v = values,
                "d" => g.d = values,
                other => return domain(format!("unknown grid axis `{other}` (expected x, v or d)")),
            }
        }
        Ok(g)
    }

    fn describe(&self, with_d: bool) -> String {
        let show = |xs: &[f64]| {
            xs.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(",")
        };
        let mut s = format!("x={};v={}", show(&self.x), show(&self.v));
        if with_d {
            s.push_str(&format!(";d={}", show(&self.d)));
        }
        s
    }
}

/// One grid point with its measured value and violation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Offender {
    #[serde(serialize_with = "sig17")]
    pub x: f64,
    #[serde(serialize_with = "sig17")]
    pub v: f64,
    /// `d` for the F check, `s2` for the curvature law.
    #[serde(serialize_with = "sig17_opt", skip_serializing_if = "Option::is_none")]
    pub aux: Option<f64>,
    #[serde(serialize_with = "sig17")]
    pub value: f64,
    #[serde(serialize_with = "sig17")]
    pub violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertReport {
    pub lemma: Lemma,
    pub grid: String,
    pub points: usize,
    #[serde(serialize_with = "sig17")]
    pub tolerance: f64,
    #[serde(serialize_with = "sig17")]
    pub max_violation: f64,
    pub passed: bool,
    /// Up to [`WORST_KEPT`] points, largest violation first.
    pub worst: Vec<Offender>,
}

pub const WORST_KEPT: usize = 5;

fn report(lemma: Lemma, grid: String, mut rows: Vec<Offender>) -> CertReport {
    let points = rows.len();
    let max_violation = rows.iter().map(|o| o.violation).fold(0.0, f64::max);
    let nan = rows.iter().any(|o| o.violation.is_nan() || o.value.is_nan());
    rows.sort_by(|a, b| b.violation.total_cmp(&a.violation));
    rows.truncate(WORST_KEPT);
    let tolerance = lemma.tolerance();
    CertReport {
        lemma,
        grid,
        points,
        tolerance,
        max_violation: if nan { f64::NAN } else { max_violation },
        passed: !nan && max_violation <= tolerance,
        worst: rows,
    }
}

/// Sweeps one lemma over `grid`. Failures are recorded in the report; only an
/// empty or invalid grid is an error.
pub fn certify<T: Real>(kernel: &Kernel<T>, lemma: Lemma, grid: &Grid) -> Result<CertReport> {
    if grid.x.is_empty() || grid.v.is_empty() || (lemma == Lemma::AuxF && grid.d.is_empty()) {
        return domain("grid is empty");
    }
    if grid.v.iter().any(|v| *v < 0.0) {
        return domain("grid variances must be >= 0");
    }
    let mut rows = Vec::new();
    let point = |x: f64, v: f64, aux: Option<f64>, value: f64, violation: f64| Offender {
        x,
        v,
        aux,
        value,
        violation,
    };
    match lemma {
        Lemma::KeyInequality => {
            for &v in &grid.v {
                for &x in &grid.x {
                    let [l1, l2, l3, l4] = kernel.values(T::lit(x), T::lit(v))?.d;
                    let (key, scale) = key_terms(l1, l2, l3, l4);
                    let (key, scale) = (key.as_f64(), scale.as_f64());
                    let violation = if x == 0.0 {
                        (key.abs() - KEY_ZERO_TOL).max(0.0)
                    } else {
                        let signed = x.signum() * key;
                        let floor = if x.abs() >= KEY_MARGIN_MIN_ABS_X {
                            KEY_REL_MARGIN * scale
                        } else {
                            0.0
                        };
                        if signed > floor {
                            0.0
                        } else {
                            // relative shortfall, at least 1 for a wrong sign
                            let shortfall = (floor - signed) / scale.max(f64::MIN_POSITIVE);
                            if signed <= 0.0 { shortfall.max(1.0) } else { shortfall }
                        }
                    };
                    rows.push(point(x, v, None, key, violation));
                }
            }
        }
        Lemma::ThirdDerivIdentity => {
            if grid.v.iter().any(|v| *v <= 0.0) {
                return domain("third-derivative identity needs v > 0");
            }
            for &v in &grid.v {
                for &x in &grid.x {
                    let d3 = log_density_d3(kernel, T::lit(x), T::lit(v))?.as_f64();
                    let mu3 = conditional_mu3(x, v)?;
                    let from_moment = mu3 / (v * v * v);
                    let mut violation = (d3 - from_moment).abs() / d3.abs().max(REL_ATOL);
                    if x > 0.0 && !(mu3 > 0.0) {
                        violation = violation.max(1.0);
                    }
                    rows.push(point(x, v, None, d3, violation));
                }
            }
        }
        Lemma::CurvatureSign => {
            for &s1 in &grid.v {
                for &s2 in &grid.v {
                    if (s1 - s2).abs() <= CURVATURE_MIN_GAP {
                        continue;
                    }
                    for &x in &grid.x {
                        if x.abs() < CURVATURE_MIN_ABS_X {
                            continue;
                        }
                        let got = link_curvature_sign(kernel, T::lit(x), T::lit(s1), T::lit(s2))?;
                        let want = signum0(s2 - s1) * signum0(x);
                        let violation = if got == want { 0.0 } else { 1.0 };
                        rows.push(point(x, s1, Some(s2), got as f64, violation));
                    }
                }
            }
            if rows.is_empty() {
                return domain("grid has no admissible (x, s1, s2) triples");
            }
        }
        Lemma::AuxF => {
            for &v in &grid.v {
                for &x in &grid.x {
                    let ctx = FContext::new(x, v)?;
                    for &d in &grid.d {
                        if !(d > 0.0) {
                            return domain(format!("offsets d = y0 - y3 must be > 0, got {d}"));
                        }
                        let out = aux_f_check(&ctx, ctx.y0 - d)?;
                        let floor = if d >= AUX_STRICT_GAP { AUX_MARGIN } else { -AUX_MARGIN };
                        let violation = out
                            .margins()
                            .into_iter()
                            .map(|m| (floor - m).max(0.0))
                            .fold(0.0, f64::max);
                        rows.push(point(x, v, Some(d), out.min_margin(), violation));
                    }
                }
            }
        }
    }
    Ok(report(lemma, grid.describe(lemma == Lemma::AuxF), rows))
}
