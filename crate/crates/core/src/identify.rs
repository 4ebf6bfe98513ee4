//! Identifiability analysis for Berkson logistic regression.
//!
//! Two smoothed logistic curves `L_0(b0 + b1·x, s)` cross at most three times
//! unless they coincide. [`classify_equation`] reproduces the four-way case split
//! (equal variances, one zero slope, both slopes zero, general) and counts
//! crossings; [`verdict_functional`] and [`verdict_structural`] turn design
//! support sizes into the sufficient identifiability conditions.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::kernel::{inverse_mu, Kernel, KernelPoint, KernelValues};
use crate::scalar::{signum0, Real};

/// Parameters of one side of the crossing equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveParams<T> {
    pub b0: T,
    pub b1: T,
    /// Smoothing variance, `b1²·τ²` in the model.
    pub s: T,
}

impl<T: Real> CurveParams<T> {
    pub fn new(b0: T, b1: T, s: T) -> Result<Self> {
        let c = Self { b0, b1, s };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.b0.is_finite() && self.b1.is_finite() && self.s.is_finite()) {
            return domain("curve parameters must be finite");
        }
        if self.s < T::zero() {
            return domain(format!("smoothing variance must be >= 0, got {}", self.s));
        }
        Ok(())
    }

    fn arg(&self, x: T) -> T {
        self.b0 + self.b1 * x
    }

    /// x-range over which the curve moves between its limits.
    fn transition(&self) -> Option<(T, T)> {
        if self.b1 == T::zero() {
            return None;
        }
        let centre = -self.b0 / self.b1;
        let width = (T::one() + self.s).sqrt() / self.b1.abs();
        Some((centre, width))
    }
}

/// `L_0(left(x)) = L_0(right(x))` searched over `window`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquationSpec<T> {
    pub left: CurveParams<T>,
    pub right: CurveParams<T>,
    pub window: (T, T),
}

impl<T: Real> EquationSpec<T> {
    pub fn new(left: CurveParams<T>, right: CurveParams<T>, window: (T, T)) -> Result<Self> {
        let spec = Self {
            left,
            right,
            window,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Equation with the default window `[−W, W]`, `W = 50·(1 + max scale)`, where
    /// a curve's scale is `(|b0| + √(1+s))/|b1|`.
    pub fn with_default_window(left: CurveParams<T>, right: CurveParams<T>) -> Result<Self> {
        left.validate()?;
        right.validate()?;
        let scale = [left, right]
            .iter()
            .filter(|c| c.b1 != T::zero())
            .map(|c| (c.b0.abs() + (T::one() + c.s).sqrt()) / c.b1.abs())
            .fold(T::zero(), T::max);
        let w = T::lit(50.0) * (T::one() + scale);
        Self::new(left, right, (-w, w))
    }

    pub fn validate(&self) -> Result<()> {
        self.left.validate()?;
        self.right.validate()?;
        let (a, b) = self.window;
        if !(a.is_finite() && b.is_finite() && a < b) {
            return domain("window must be a bounded nonempty interval");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CaseTag {
    EqualVariances,
    RightSlopeZero,
    BothSlopesZero,
    GeneralCase,
    IdentityExceptional,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Real")]
pub struct SolutionReport<T> {
    #[serde(rename = "case")]
    pub case_tag: CaseTag,
    /// Sorted, strictly increasing, inside the window.
    #[serde(serialize_with = "crate::report::sig17_vec")]
    pub roots: Vec<T>,
    /// Parallel to `roots`: true for touching (double) roots.
    pub tangential: Vec<bool>,
    pub is_identity: bool,
    /// The window ends are not yet in both curves' asymptotic regime.
    pub truncated: bool,
}

/// Tolerances for [`classify_equation`].
#[derive(Debug, Clone, Copy)]
pub struct ScanOptions {
    pub grid_points: usize,
    /// Sub-grid density multiplier used around suspicious cells.
    pub refine_factor: usize,
    /// Parameter/level tolerance for declaring two curves identical.
    pub identity_tol: f64,
    /// Relative size of `|g|` at a critical point below which a touching root is reported.
    pub tangent_rel_tol: f64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            grid_points: 4096,
            refine_factor: 8,
            identity_tol: 1e-12,
            tangent_rel_tol: 1e-9,
        }
    }
}

/// `y` solving `L_0(y, s1) = L_0(x, s2)`; odd and strictly increasing in `x`.
pub fn implicit_link<T: Real>(kernel: &Kernel<T>, x: T, s1: T, s2: T) -> Result<T> {
    KernelPoint::new(x, s1)?;
    KernelPoint::new(x, s2)?;
    if s1 == s2 || x == T::zero() {
        return Ok(x);
    }
    // work in the lower tail, where L_0 is resolved to full relative precision
    let z = kernel.values_at(KernelPoint { x: -x.abs(), v: s2 }).cdf;
    if z <= T::zero() {
        return Err(Error::Convergence(format!(
            "L_0({}, {s2}) underflows; x lies beyond the tail cutoff",
            -x.abs()
        )));
    }
    let y = inverse_mu(kernel, z, s1)?;
    Ok(if x > T::zero() { -y } else { y })
}

/// Second derivative of the implicit link, from
/// `(L_2(x,s2)/L_1(x,s2)² − L_2(y,s1)/L_1(y,s1)²)·L_1(x,s2)²/L_1(y,s1)`.
///
/// Also returns the magnitude of the two bracketed terms for dead-zone scaling.
pub fn link_curvature<T: Real>(kernel: &Kernel<T>, x: T, s1: T, s2: T) -> Result<(T, T)> {
    let y = implicit_link(kernel, x, s1, s2)?;
    let vx = kernel.values_at(KernelPoint { x, v: s2 });
    let vy = kernel.values_at(KernelPoint { x: y, v: s1 });
    let (l1x, l2x) = (vx.d[0], vx.d[1]);
    let (l1y, l2y) = (vy.d[0], vy.d[1]);
    if !(l1x > T::zero() && l1y > T::zero()) {
        return Err(Error::Convergence(format!(
            "density underflow at x = {x}; curvature undefined numerically"
        )));
    }
    let a = l2x / (l1x * l1x);
    let b = l2y / (l1y * l1y);
    if s1 == s2 {
        return Ok((T::zero(), a.abs() + b.abs()));
    }
    Ok(((a - b) * l1x * l1x / l1y, a.abs() + b.abs()))
}

/// Relative dead zone applied to the bracketed difference in [`link_curvature_sign`].
pub const CURVATURE_REL_TOL: f64 = 1e-9;

/// Sign of `d²y/dx²` for the implicit link, with a dead zone around 0.
pub fn link_curvature_sign<T: Real>(kernel: &Kernel<T>, x: T, s1: T, s2: T) -> Result<i32> {
    if x == T::zero() {
        return domain("curvature sign is requested at x != 0");
    }
    let (curv, scale) = link_curvature(kernel, x, s1, s2)?;
    let y = implicit_link(kernel, x, s1, s2)?;
    let vx = kernel.values_at(KernelPoint { x, v: s2 });
    let vy = kernel.values_at(KernelPoint { x: y, v: s1 });
    // undo the positive factor L_1(x)²/L_1(y) to compare the bracket with its scale
    let bracket = curv * vy.d[0] / (vx.d[0] * vx.d[0]);
    if bracket.abs() <= T::lit(CURVATURE_REL_TOL) * scale {
        Ok(0)
    } else {
        Ok(signum0(curv))
    }
}

fn close<T: Real>(a: T, b: T, tol: T) -> bool {
    (a - b).abs() <= tol * T::one().max(a.abs()).max(b.abs())
}

/// Classifies `L_0(b0¹ + b1¹x, s1) = L_0(b0² + b1²x, s2)` and lists its roots.
pub fn classify_equation<T: Real>(
    kernel: &Kernel<T>,
    spec: &EquationSpec<T>,
    opts: &ScanOptions,
) -> Result<SolutionReport<T>> {
    spec.validate()?;
    let tol = T::lit(opts.identity_tol);
    let (l, r) = (spec.left, spec.right);
    let (a, b) = spec.window;
    let truncated = window_truncated(kernel, spec);
    let report = |case_tag, roots: Vec<T>, is_identity| {
        let tangential = vec![false; roots.len()];
        SolutionReport {
            case_tag,
            roots,
            tangential,
            is_identity,
            truncated,
        }
    };
    let eq = Crossing { left: l, right: r };
    let in_window = |x: T| x >= a && x <= b && eq.resolvable(kernel, x);

    // Case 1: equal variances reduce to the linear equation.
    if close(l.s, r.s, tol) {
        if close(l.b1, r.b1, tol) {
            if close(l.b0, r.b0, tol) {
                return Ok(report(CaseTag::IdentityExceptional, vec![], true));
            }
            return Ok(report(CaseTag::EqualVariances, vec![], false));
        }
        let root = (r.b0 - l.b0) / (l.b1 - r.b1);
        let roots = if in_window(root) { vec![root] } else { vec![] };
        return Ok(report(CaseTag::EqualVariances, roots, false));
    }

    // Case 3: neither side depends on x.
    if l.b1 == T::zero() && r.b1 == T::zero() {
        let ll = kernel.values_at(KernelPoint { x: l.b0, v: l.s });
        let rl = kernel.values_at(KernelPoint { x: r.b0, v: r.s });
        let same = (ll.cdf - rl.cdf).abs() <= tol && (ll.upper - rl.upper).abs() <= tol;
        return Ok(if same {
            report(CaseTag::IdentityExceptional, vec![], true)
        } else {
            report(CaseTag::BothSlopesZero, vec![], false)
        });
    }

    // Case 2: exactly one zero slope; put the flat curve on the right.
    if l.b1 == T::zero() || r.b1 == T::zero() {
        let (sloped, flat) = if r.b1 == T::zero() { (l, r) } else { (r, l) };
        let level = kernel.values_at(KernelPoint {
            x: flat.b0,
            v: flat.s,
        });
        let mu = if level.cdf <= T::lit(0.5) {
            inverse_mu(kernel, level.cdf, sloped.s)?
        } else {
            -inverse_mu(kernel, level.upper, sloped.s)?
        };
        let root = (mu - sloped.b0) / sloped.b1;
        let roots = if in_window(root) { vec![root] } else { vec![] };
        return Ok(report(CaseTag::RightSlopeZero, roots, false));
    }

    // Case 4: distinct variances, both slopes nonzero.
    let (roots, tangential) = scan_roots(kernel, spec, opts)?;
    if roots.len() > 3 {
        return Err(Error::Consistency(format!(
            "found {} crossings for {:?}; at most three are possible",
            roots.len(),
            spec
        )));
    }
    Ok(SolutionReport {
        case_tag: CaseTag::GeneralCase,
        roots,
        tangential,
        is_identity: false,
        truncated,
    })
}

/// Distance from 0 or 1 below which a curve counts as having reached its limit.
pub const SETTLED_TOL: f64 = 1e-12;

fn window_truncated<T: Real>(kernel: &Kernel<T>, spec: &EquationSpec<T>) -> bool {
    let tol = T::lit(SETTLED_TOL);
    let settled = |c: &CurveParams<T>, x: T| {
        let v = kernel.values_at(KernelPoint { x: c.arg(x), v: c.s });
        v.cdf <= tol || v.upper <= tol
    };
    let (a, b) = spec.window;
    let ends_ok = [a, b]
        .iter()
        .all(|&x| settled(&spec.left, x) && settled(&spec.right, x));
    // flat curves never settle, but they need no further search either
    let flat = spec.left.b1 == T::zero() || spec.right.b1 == T::zero();
    !(ends_ok || flat)
}

fn settled<T: Real>(lv: &KernelValues<T>, rv: &KernelValues<T>) -> bool {
    let half = T::lit(0.5);
    let same_side = (lv.cdf > half) == (rv.cdf > half);
    let clamped = lv.cdf.min(lv.upper) == T::zero() || rv.cdf.min(rv.upper) == T::zero();
    same_side && clamped
}

struct Crossing<T> {
    left: CurveParams<T>,
    right: CurveParams<T>,
}

impl<T: Real> Crossing<T> {
    /// `g(x) = L_0(left) − L_0(right)`, using upper tails when both sides exceed ½,
    /// together with `g'(x)` and the magnitude scale of the smaller tail.
    ///
    /// Where both curves approach the same limit and one of them has been
    /// clamped to it, `g` is reported as exactly zero; comparing a clamped tail
    /// with an unclamped one would produce spurious sign changes.
    fn eval(&self, kernel: &Kernel<T>, x: T) -> (T, T, T) {
        let lv = kernel.values_at(KernelPoint {
            x: self.left.arg(x),
            v: self.left.s,
        });
        let rv = kernel.values_at(KernelPoint {
            x: self.right.arg(x),
            v: self.right.s,
        });
        let half = T::lit(0.5);
        let g = if lv.cdf > half && rv.cdf > half {
            rv.upper - lv.upper
        } else {
            lv.cdf - rv.cdf
        };
        let dg = self.left.b1 * lv.d[0] - self.right.b1 * rv.d[0];
        let scale = lv.cdf.min(lv.upper).max(rv.cdf.min(rv.upper));
        if settled(&lv, &rv) {
            return (T::zero(), dg, scale);
        }
        (g, dg, scale)
    }

    /// False where one curve is clamped to the limit the other approaches.
    fn resolvable(&self, kernel: &Kernel<T>, x: T) -> bool {
        let lv = kernel.values_at(KernelPoint {
            x: self.left.arg(x),
            v: self.left.s,
        });
        let rv = kernel.values_at(KernelPoint {
            x: self.right.arg(x),
            v: self.right.s,
        });
        !settled(&lv, &rv)
    }

    fn g(&self, kernel: &Kernel<T>, x: T) -> T {
        self.eval(kernel, x).0
    }
}

fn linspace<T: Real>(a: T, b: T, n: usize) -> impl Iterator<Item = T> {
    let n = n.max(2);
    let step = (b - a) / T::from_usize(n - 1).unwrap();
    (0..n).map(move |i| if i == n - 1 { b } else { a + step * T::from_usize(i).unwrap() })
}

/// Bisection on a sign change of `f` over `[a, b]` to full precision.
fn bisect<T: Real, F: FnMut(T) -> T>(mut f: F, mut a: T, mut b: T) -> T {
    let fa = f(a);
    for _ in 0..200 {
        let m = T::lit(0.5) * (a + b);
        if m <= a || m >= b {
            break;
        }
        let fm = f(m);
        if fm == T::zero() {
            return m;
        }
        if signum0(fm) == signum0(fa) {
            a = m;
        } else {
            b = m;
        }
    }
    T::lit(0.5) * (a + b)
}

/// Numeric crossing search: dense scan (uniform over the window plus each curve's
/// transition zone), critical points of `g` inserted as extra scan nodes, local
/// re-scans at `refine_factor`× density, then bisection of each sign change.
///
/// Works for any equation; [`classify_equation`] uses it for the general case.
pub fn scan_roots<T: Real>(
    kernel: &Kernel<T>,
    spec: &EquationSpec<T>,
    opts: &ScanOptions,
) -> Result<(Vec<T>, Vec<bool>)> {
    spec.validate()?;
    let eq = Crossing {
        left: spec.left,
        right: spec.right,
    };
    let (a, b) = spec.window;
    let n = opts.grid_points.max(16);
    let mut xs: Vec<T> = linspace(a, b, n).collect();
    for c in [spec.left, spec.right] {
        if let Some((centre, width)) = c.transition() {
            let lo = (centre - T::lit(40.0) * width).max(a);
            let hi = (centre + T::lit(40.0) * width).min(b);
            if lo < hi {
                xs.extend(linspace(lo, hi, n));
            }
        }
    }
    sort_dedup(&mut xs);

    let mut samples: Vec<(T, T, T, T)> = xs
        .iter()
        .map(|&x| {
            let (g, dg, sc) = eq.eval(kernel, x);
            (x, g, dg, sc)
        })
        .collect();

    // cells that deserve a finer look: sign changes of g or g', and local minima of |g|
    let mut suspicious = Vec::new();
    for i in 0..samples.len() - 1 {
        let (g0, g1) = (samples[i].1, samples[i + 1].1);
        let (d0, d1) = (samples[i].2, samples[i + 1].2);
        let sign_change = signum0(g0) * signum0(g1) < 0 || signum0(d0) * signum0(d1) < 0;
        // a dip must clear rounding noise, otherwise flat plateaus qualify everywhere
        let local_min = i > 0 && samples[i].1 != T::zero() && {
            let m = samples[i - 1].1.abs().min(samples[i + 1].1.abs());
            m - samples[i].1.abs() > T::lit(1e-9) * m
        };
        if sign_change || local_min {
            suspicious.push(i);
        }
    }
    let factor = opts.refine_factor.max(2);
    let mut extra = Vec::new();
    for &i in &suspicious {
        let lo = samples[i.saturating_sub(1)].0;
        let hi = samples[(i + 2).min(samples.len() - 1)].0;
        extra.extend(linspace(lo, hi, 3 * factor + 1));
    }
    for x in extra {
        let (g, dg, sc) = eq.eval(kernel, x);
        samples.push((x, g, dg, sc));
    }
    samples.sort_by(|p, q| p.0.partial_cmp(&q.0).unwrap());
    samples.dedup_by(|p, q| p.0 == q.0);

    // critical points of g become scan nodes, so g is monotone between nodes
    let mut crit = Vec::new();
    for w in samples.windows(2) {
        if signum0(w[0].2) * signum0(w[1].2) < 0 {
            let c = bisect(|x| eq.eval(kernel, x).2, w[0].0, w[1].0);
            crit.push(c);
        }
    }
    let mut tangents = Vec::new();
    for &c in &crit {
        let (g, dg, sc) = eq.eval(kernel, c);
        samples.push((c, g, dg, sc));
        if g != T::zero() && g.abs() <= T::lit(opts.tangent_rel_tol) * sc {
            tangents.push(c);
        }
    }
    samples.sort_by(|p, q| p.0.partial_cmp(&q.0).unwrap());
    samples.dedup_by(|p, q| p.0 == q.0);

    let mut roots: Vec<(T, bool)> = Vec::new();
    let nonzero: Vec<_> = samples.iter().filter(|s| s.1 != T::zero()).collect();
    for w in nonzero.windows(2) {
        if signum0(w[0].1) * signum0(w[1].1) < 0 {
            let r = bisect(|x| eq.g(kernel, x), w[0].0, w[1].0);
            roots.push((r, false));
        }
    }
    for c in tangents {
        // a touching root must not sit inside an already bracketed crossing
        let near = roots
            .iter()
            .any(|&(r, _)| (r - c).abs() <= T::lit(1e-6) * T::one().max(c.abs()));
        if !near {
            roots.push((c, true));
        }
    }
    roots.sort_by(|p, q| p.0.partial_cmp(&q.0).unwrap());
    roots.dedup_by(|p, q| p.0 == q.0);
    Ok(roots.into_iter().unzip())
}

fn sort_dedup<T: Real>(xs: &mut Vec<T>) {
    xs.sort_by(|p, q| p.partial_cmp(q).unwrap());
    xs.dedup();
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Theorem {
    /// Functional model, known error variance: two distinct design points.
    FuncKnownTau,
    /// Structural model, known error variance: non-degenerate regressor law.
    StructKnownTau,
    /// Functional model, unknown error variance: four distinct design points.
    FuncUnknownTau,
    /// Structural model, unknown error variance: support not within three points.
    StructUnknownTau,
}

impl Theorem {
    /// Minimum number of distinct support points that triggers the theorem.
    pub fn threshold(self) -> usize {
        match self {
            Theorem::FuncKnownTau | Theorem::StructKnownTau => 2,
            Theorem::FuncUnknownTau | Theorem::StructUnknownTau => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Verdict {
    pub identifiable: bool,
    pub theorem: Theorem,
    /// Distinct support points; `None` for a continuous (infinite) support.
    pub support_points: Option<usize>,
    pub note: String,
}

/// Size of the regressor support in the structural model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Support {
    Finite(usize),
    Infinite,
}

fn verdict(theorem: Theorem, support: Support) -> Verdict {
    let met = match support {
        Support::Finite(n) => n >= theorem.threshold(),
        Support::Infinite => true,
    };
    let identified = match theorem {
        Theorem::FuncKnownTau | Theorem::StructKnownTau => "(b0, b1)",
        Theorem::FuncUnknownTau | Theorem::StructUnknownTau => "(b0, b1) and b1^2*tau^2",
    };
    let note = if met {
        format!(
            "sufficient condition holds ({} or more distinct support points): {identified} identifiable",
            theorem.threshold()
        )
    } else {
        format!(
            "sufficient condition fails (needs {} distinct support points); no conclusion",
            theorem.threshold()
        )
    };
    Verdict {
        identifiable: met,
        theorem,
        support_points: match support {
            Support::Finite(n) => Some(n),
            Support::Infinite => None,
        },
        note,
    }
}

/// Counts distinct values after mapping −0 to 0.
pub fn distinct_count<T: Real>(values: &[T]) -> Result<usize> {
    if values.iter().any(|v| v.is_nan()) {
        return domain("design contains NaN");
    }
    let mut xs: Vec<T> = values
        .iter()
        .map(|&v| if v == T::zero() { T::zero() } else { v })
        .collect();
    sort_dedup(&mut xs);
    Ok(xs.len())
}

/// Identifiability verdict for a fixed design.
pub fn verdict_functional<T: Real>(design: &[T], tau_known: bool) -> Result<Verdict> {
    if design.is_empty() {
        return domain("design is empty");
    }
    let n = distinct_count(design)?;
    let theorem = if tau_known {
        Theorem::FuncKnownTau
    } else {
        Theorem::FuncUnknownTau
    };
    Ok(verdict(theorem, Support::Finite(n)))
}

/// Identifiability verdict for an i.i.d. regressor with the given support size.
pub fn verdict_structural(support: Support, tau_known: bool) -> Result<Verdict> {
    if support == Support::Finite(0) {
        return domain("support must contain at least one point");
    }
    let theorem = if tau_known {
        Theorem::StructKnownTau
    } else {
        Theorem::StructUnknownTau
    };
    Ok(verdict(theorem, support))
}
