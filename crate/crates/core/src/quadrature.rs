//! Quadrature rules: Gauss–Hermite for Gaussian expectations and an adaptive
//! Gauss–Kronrod (7/15) integrator for finite intervals.

use crate::error::{domain, Result};
use crate::scalar::Real;

/// Gauss–Hermite rule for integrals of the form ∫ e^{-u²} f(u) du.
///
/// Nodes are stored for the non-negative half only (`nodes[i] >= 0`, descending),
/// since the rule is symmetric; [`GaussHermite::expect_symmetric`] sums mirrored
/// pairs together so odd integrands cancel exactly at the symmetry point.
#[derive(Debug, Clone)]
pub struct GaussHermite<T> {
    order: usize,
    /// Positive nodes in decreasing order, followed by 0 if `order` is odd.
    nodes: Vec<T>,
    /// Weights normalised by 1/√π, so they sum to one over the full rule.
    weights: Vec<T>,
}

impl<T: Real> GaussHermite<T> {
    /// Builds the rule by Newton iteration on the orthonormal Hermite recurrence.
    ///
    /// The computation runs in `f64` and the result is converted to `T`.
    pub fn new(order: usize) -> Result<Self> {
        if order == 0 {
            return domain("Gauss-Hermite order must be positive");
        }
        let (x, w) = hermite_nodes_f64(order)?;
        let inv_sqrt_pi = 1.0 / std::f64::consts::PI.sqrt();
        let half = order.div_ceil(2);
        let nodes = x[..half].iter().map(|&u| T::lit(u)).collect();
        let weights = w[..half].iter().map(|&wi| T::lit(wi * inv_sqrt_pi)).collect();
        Ok(Self {
            order,
            nodes,
            weights,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// `(u, w)` for each positive node, outermost (smallest weight) first.
    pub fn pairs(&self) -> impl Iterator<Item = (T, T)> + '_ {
        let n = self.order / 2;
        self.nodes[..n].iter().copied().zip(self.weights[..n].iter().copied())
    }

    /// Weight of the node at zero, present for odd orders.
    pub fn centre_weight(&self) -> Option<T> {
        (self.order % 2 == 1).then(|| self.weights[self.order / 2])
    }

    /// E[f(Z)] for Z ~ N(0, 1/2), i.e. (1/√π) ∫ e^{-u²} f(u) du.
    pub fn expect<F: FnMut(T) -> T>(&self, mut f: F) -> T {
        let mut acc = T::zero();
        for (u, w) in self.pairs() {
            acc = acc + w * (f(u) + f(-u));
        }
        if let Some(w) = self.centre_weight() {
            acc = acc + w * f(T::zero());
        }
        acc
    }

    /// Same as [`expect`](Self::expect) but the caller supplies the mirrored pair
    /// sum `pair(u) = f(u) + f(-u)` (for u > 0) and the centre value.
    pub fn expect_symmetric<P, C>(&self, mut pair: P, mut centre: C) -> T
    where
        P: FnMut(T) -> T,
        C: FnMut(T) -> T,
    {
        let mut acc = T::zero();
        for (u, w) in self.pairs() {
            acc = acc + w * pair(u);
        }
        if let Some(w) = self.centre_weight() {
            acc = acc + w * centre(T::zero());
        }
        acc
    }
}

fn hermite_nodes_f64(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    const PIM4: f64 = 0.751_125_544_464_942_5; // π^{-1/4}
    let nf = n as f64;
    let mut x = vec![0.0f64; n];
    let mut w = vec![0.0f64; n];
    let m = n.div_ceil(2);
    let mut z = 0.0f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.855_75 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        let mut converged = false;
        for _ in 0..100 {
            let mut p1 = PIM4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let step = p1 / pp;
            z -= step;
            if step.abs() <= 1e-15 * z.abs().max(1.0) {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(crate::Error::Convergence(format!(
                "Gauss-Hermite node {i} of order {n} did not converge"
            )));
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    if n % 2 == 1 {
        x[m - 1] = 0.0;
    }
    Ok((x, w))
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
pub struct Integral<T> {
    pub value: T,
    pub abs_error: T,
}

struct Panel<T> {
    a: T,
    b: T,
    value: T,
    error: T,
    abs_mass: T,
}

fn gk15<T: Real, F: FnMut(T) -> T>(f: &mut F, a: T, b: T) -> Panel<T> {
    let two = T::lit(2.0);
    let centre = (a + b) / two;
    let half = (b - a) / two;
    let fc = f(centre);
    let mut kron = fc * T::lit(WGK[7]);
    let mut gauss = fc * T::lit(WG[3]);
    let mut mass = fc.abs() * T::lit(WGK[7]);
    for j in 0..7 {
        let dx = half * T::lit(XGK[j]);
        let f1 = f(centre - dx);
        let f2 = f(centre + dx);
        kron = kron + T::lit(WGK[j]) * (f1 + f2);
        mass = mass + T::lit(WGK[j]) * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss = gauss + T::lit(WG[j / 2]) * (f1 + f2);
        }
    }
    Panel {
        a,
        b,
        value: kron * half,
        error: ((kron - gauss) * half).abs(),
        abs_mass: mass * half.abs(),
    }
}

/// Globally adaptive Gauss–Kronrod quadrature on a finite interval.
///
/// Stops when the summed error estimate is below `max(abs_tol, rel_tol·|I|)`
/// or when it reaches the rounding floor `50·ε·∫|f|`, whichever is larger.
pub fn integrate<T, F>(mut f: F, a: T, b: T, abs_tol: T, rel_tol: T) -> Result<Integral<T>>
where
    T: Real,
    F: FnMut(T) -> T,
{
    if !(a.is_finite() && b.is_finite()) {
        return domain("integration limits must be finite");
    }
    const MAX_PANELS: usize = 4000;
    let mut panels = vec![gk15(&mut f, a, b)];
    loop {
        let value: T = panels.iter().map(|p| p.value).sum();
        let error: T = panels.iter().map(|p| p.error).sum();
        let mass: T = panels.iter().map(|p| p.abs_mass).sum();
        if !value.is_finite() {
            return Err(crate::Error::Convergence(
                "integrand produced a non-finite value".into(),
            ));
        }
        let floor = T::lit(50.0) * T::epsilon() * mass;
        let target = abs_tol.max(rel_tol * value.abs()).max(floor);
        if error <= target || panels.len() >= MAX_PANELS {
            return Ok(Integral {
                value,
                abs_error: error,
            });
        }
        let (worst, _) = panels
            .iter()
            .enumerate()
            .fold((0, T::neg_infinity()), |(bi, be), (i, p)| {
                if p.error > be {
                    (i, p.error)
                } else {
                    (bi, be)
                }
            });
        let p = panels.swap_remove(worst);
        let mid = (p.a + p.b) / T::lit(2.0);
        panels.push(gk15(&mut f, p.a, mid));
        panels.push(gk15(&mut f, mid, p.b));
    }
}
