use std::fmt;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;

use crate::error::{domain, Error, Result};
use crate::kernel::Kernel;
use crate::report::fmt_sig17;
use crate::scalar::Real;

use super::{Dataset, DesignKind, ModelParams, Observation};

/// Distribution of the surrogate regressor in a structural design.
#[derive(Debug, Clone, PartialEq)]
pub enum Sampler {
    /// Normal with the given mean and variance.
    Normal { mean: f64, var: f64 },
    Uniform { lo: f64, hi: f64 },
    /// Finite distribution on `atoms` with (unnormalised) `weights`.
    Discrete { atoms: Vec<f64>, weights: Vec<f64> },
}

impl Sampler {
    fn validate(&self) -> Result<()> {
        match self {
            Sampler::Normal { mean, var } => {
                if !mean.is_finite() || !var.is_finite() || *var < 0.0 {
                    return domain(format!("normal needs finite mean and variance >= 0, got {mean}, {var}"));
                }
            }
            Sampler::Uniform { lo, hi } => {
                if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                    return domain(format!("uniform needs finite lo < hi, got {lo}, {hi}"));
                }
            }
            Sampler::Discrete { atoms, weights } => {
                if atoms.is_empty() || atoms.len() != weights.len() {
                    return domain("discrete needs one weight per atom and at least one atom");
                }
                if atoms.iter().any(|a| !a.is_finite())
                    || weights.iter().any(|w| !w.is_finite() || *w < 0.0)
                    || weights.iter().all(|w| *w == 0.0)
                {
                    return domain("discrete atoms must be finite and weights nonnegative, not all zero");
                }
            }
        }
        Ok(())
    }

    /// Distinct support points, `None` when continuous.
    pub fn support_size(&self) -> Option<usize> {
        match self {
            Sampler::Discrete { atoms, weights } => {
                let live: Vec<f64> = atoms
                    .iter()
                    .zip(weights)
                    .filter(|(_, w)| **w > 0.0)
                    .map(|(a, _)| *a)
                    .collect();
                crate::identify::distinct_count(&live).ok()
            }
            _ => None,
        }
    }
}

impl fmt::Display for Sampler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sampler::Normal { mean, var } => write!(f, "normal,{},{}", fmt_sig17(*mean), fmt_sig17(*var)),
            Sampler::Uniform { lo, hi } => write!(f, "uniform,{},{}", fmt_sig17(*lo), fmt_sig17(*hi)),
            Sampler::Discrete { atoms, weights } => {
                write!(f, "discrete")?;
                for (a, w) in atoms.iter().zip(weights) {
                    write!(f, ",{}:{}", fmt_sig17(*a), fmt_sig17(*w))?;
                }
                Ok(())
            }
        }
    }
}

/// Parses `normal,MEAN,VAR`, `uniform,LO,HI` or `discrete,X1:W1,X2:W2,...`.
impl FromStr for Sampler {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split(',').map(str::trim);
        let name = parts.next().unwrap_or_default().to_ascii_lowercase();
        let rest: Vec<&str> = parts.collect();
        let num = |t: &str| -> Result<f64> {
            t.parse::<f64>()
                .map_err(|_| Error::Domain(format!("bad number `{t}` in sampler `{s}`")))
        };
        let sampler = match name.as_str() {
            "normal" | "uniform" => {
                if rest.len() != 2 {
                    return domain(format!("{name} takes two parameters, got `{s}`"));
                }
                let (a, b) = (num(rest[0])?, num(rest[1])?);
                if name == "normal" {
                    Sampler::Normal { mean: a, var: b }
                } else {
                    Sampler::Uniform { lo: a, hi: b }
                }
            }
            "discrete" => {
                let mut atoms = Vec::new();
                let mut weights = Vec::new();
                for item in rest {
                    let (a, w) = item
                        .split_once(':')
                        .ok_or_else(|| Error::Domain(format!("discrete atom `{item}` must be X:W")))?;
                    atoms.push(num(a)?);
                    weights.push(num(w)?);
                }
                Sampler::Discrete { atoms, weights }
            }
            _ => return domain(format!("unsupported distribution `{name}`")),
        };
        sampler.validate()?;
        Ok(sampler)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Design<T> {
    /// Fixed surrogate regressors, one row each.
    Functional(Vec<T>),
    /// `n` i.i.d. draws from `sampler`.
    Structural { sampler: Sampler, n: usize },
}

enum Draw {
    Normal(Normal<f64>),
    Uniform(Uniform<f64>),
    Discrete(WeightedIndex<f64>, Vec<f64>),
}

impl Draw {
    fn new(s: &Sampler) -> Result<Self> {
        s.validate()?;
        let bad = |e: &dyn fmt::Display| Error::Domain(format!("sampler {s}: {e}"));
        Ok(match s {
            Sampler::Normal { mean, var } => Draw::Normal(Normal::new(*mean, var.sqrt()).map_err(|e| bad(&e))?),
            Sampler::Uniform { lo, hi } => Draw::Uniform(Uniform::new(*lo, *hi).map_err(|e| bad(&e))?),
            Sampler::Discrete { atoms, weights } => {
                Draw::Discrete(WeightedIndex::new(weights).map_err(|e| bad(&e))?, atoms.clone())
            }
        })
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            Draw::Normal(d) => d.sample(rng),
            Draw::Uniform(d) => d.sample(rng),
            Draw::Discrete(d, atoms) => atoms[d.sample(rng)],
        }
    }
}

/// Draws a Berkson dataset.
///
/// The generator is ChaCha8 seeded with `ChaCha8Rng::seed_from_u64(seed)`. Rows are
/// produced in order; a structural row first draws its `x0` and then a uniform `u`
/// in `[0, 1)`, and `y = 1` iff `u < P(Y = 1 | x0)`. A functional row draws only `u`.
pub fn simulate<T: Real>(
    kernel: &Kernel<T>,
    params: &ModelParams<T>,
    design: &Design<T>,
    seed: u64,
) -> Result<Dataset<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = params.s();
    let draw_y = |rng: &mut ChaCha8Rng, x0: T| -> Result<Observation<T>> {
        let p = kernel.l(0, params.b0 + params.b1 * x0, s)?;
        let u: f64 = rng.random();
        Ok(Observation {
            x0,
            y: (u < p.as_f64()) as u8,
        })
    };
    let (rows, kind, spec) = match design {
        Design::Functional(xs) => {
            if xs.is_empty() {
                return domain("design is empty");
            }
            let rows = xs
                .iter()
                .map(|&x0| {
                    if !x0.is_finite() {
                        return domain("design values must be finite");
                    }
                    draw_y(&mut rng, x0)
                })
                .collect::<Result<Vec<_>>>()?;
            (rows, DesignKind::Functional, format!("functional,n={}", xs.len()))
        }
        Design::Structural { sampler, n } => {
            if *n == 0 {
                return domain("sample size must be at least 1");
            }
            let d = Draw::new(sampler)?;
            let rows = (0..*n)
                .map(|_| {
                    let x0 = T::lit(d.sample(&mut rng));
                    draw_y(&mut rng, x0)
                })
                .collect::<Result<Vec<_>>>()?;
            (rows, DesignKind::Structural, format!("{sampler},n={n}"))
        }
    };
    let mut ds = Dataset::new(rows, kind)?;
    ds.seed = Some(seed);
    ds.source_spec = Some(spec);
    Ok(ds)
}
