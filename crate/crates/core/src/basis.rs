//! Modal scalar bases on the chart domain, tabulated as second-order jets.
//!
//! Each factor contributes its own family and the basis is the full tensor
//! product:
//!
//! - circle: `1, cos k theta, sin k theta` for `k <= circle_modes`
//! - `S^k`: monomials in the embedding coordinates of the unit sphere with the
//!   last exponent at most one, total degree `<= sphere_degree` (a basis of
//!   the spherical harmonics of that degree)
//! - line: `He_m(s) / sqrt(m!)` in the ambient coordinate `s`, orthonormal
//!   for the standard Gaussian
//! - interval: Legendre polynomials on the interval

use serde::Serialize;

use crate::error::{Error, Result};
use crate::jet::Jet;
use crate::models::chart::unit_sphere_jets;
use crate::models::{Factor, ShrinkerModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BasisOptions {
    pub circle_modes: usize,
    pub sphere_degree: usize,
    pub line_degree: usize,
    pub interval_degree: usize,
}

impl Default for BasisOptions {
    fn default() -> Self {
        Self { circle_modes: 6, sphere_degree: 6, line_degree: 12, interval_degree: 10 }
    }
}

impl BasisOptions {
    pub fn validate(&self) -> Result<()> {
        if self.line_degree > 60 || self.sphere_degree > 30 || self.circle_modes > 200 || self.interval_degree > 60 {
            return Err(Error::InvalidInput("basis degree too large".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum FactorBasis {
    Circle { modes: usize },
    Sphere { dim: usize, exponents: Vec<Vec<u32>> },
    Line { degree: usize, scale: f64 },
    Interval { degree: usize, lo: f64, hi: f64 },
}

impl FactorBasis {
    fn len(&self) -> usize {
        match self {
            Self::Circle { modes } => 2 * modes + 1,
            Self::Sphere { exponents, .. } => exponents.len(),
            Self::Line { degree, .. } | Self::Interval { degree, .. } => degree + 1,
        }
    }

    fn eval(&self, u: &[f64], off: usize, n: usize) -> Vec<Jet> {
        match self {
            Self::Circle { modes } => {
                let t = Jet::variable(u[off], off, n);
                let mut out = vec![Jet::constant(1.0, n)];
                for k in 1..=*modes {
                    let kt = t.scale(k as f64);
                    out.push(kt.cos());
                    out.push(kt.sin());
                }
                out
            }
            Self::Sphere { dim, exponents } => {
                let w = unit_sphere_jets(*dim, &u[off..off + dim], off, n);
                let max = exponents.iter().flatten().copied().max().unwrap_or(0);
                let powers: Vec<Vec<Jet>> = w.iter().map(|c| (0..=max).map(|e| c.powi(e)).collect()).collect();
                exponents
                    .iter()
                    .map(|ex| {
                        ex.iter().enumerate().fold(Jet::constant(1.0, n), |acc, (m, &e)| &acc * &powers[m][e as usize])
                    })
                    .collect()
            }
            Self::Line { degree, scale } => {
                let s = Jet::variable(u[off], off, n).scale(*scale);
                hermite_table(s.v, *degree)
                    .into_iter()
                    .map(|(h, h1, h2)| s.chain(h, h1, h2))
                    .collect()
            }
            Self::Interval { degree, lo, hi } => {
                let mut t = Jet::variable(u[off], off, n).scale(2.0 / (hi - lo));
                t.v = (2.0 * u[off] - lo - hi) / (hi - lo);
                legendre_table(t.v, *degree).into_iter().map(|(p, p1, p2)| t.chain(p, p1, p2)).collect()
            }
        }
    }
}

/// `(h_m, h_m', h_m'')` for the normalized probabilists' Hermite polynomials.
pub fn hermite_table(s: f64, degree: usize) -> Vec<(f64, f64, f64)> {
    let mut he = vec![1.0, s];
    for m in 1..degree {
        he.push(s * he[m] - m as f64 * he[m - 1]);
    }
    he.truncate(degree + 1);
    let mut out = Vec::with_capacity(degree + 1);
    let mut fact = 1.0f64;
    for m in 0..=degree {
        if m > 0 {
            fact *= m as f64;
        }
        let mf = m as f64;
        let d1 = if m >= 1 { mf * he[m - 1] } else { 0.0 };
        let d2 = if m >= 2 { mf * (mf - 1.0) * he[m - 2] } else { 0.0 };
        let c = 1.0 / fact.sqrt();
        out.push((c * he[m], c * d1, c * d2));
    }
    out
}

/// `(P_m, P_m', P_m'')` for Legendre polynomials on `[-1, 1]`.
pub fn legendre_table(t: f64, degree: usize) -> Vec<(f64, f64, f64)> {
    let mut p = vec![1.0, t];
    let mut d1 = vec![0.0, 1.0];
    let mut d2 = vec![0.0, 0.0];
    for m in 1..degree {
        let mf = m as f64;
        p.push(((2.0 * mf + 1.0) * t * p[m] - mf * p[m - 1]) / (mf + 1.0));
        d1.push(d1[m - 1] + (2.0 * mf + 1.0) * p[m]);
        d2.push(d2[m - 1] + (2.0 * mf + 1.0) * d1[m]);
    }
    (0..=degree).map(|m| (p[m], d1[m], d2[m])).collect()
}

fn sphere_exponents(dim: usize, degree: usize) -> Vec<Vec<u32>> {
    let vars = dim + 1;
    let mut out = Vec::new();
    let mut cur = vec![0u32; vars];
    fn rec(k: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if k == cur.len() {
            out.push(cur.clone());
            return;
        }
        let cap = if k == cur.len() - 1 { left.min(1) } else { left };
        for e in 0..=cap {
            cur[k] = e;
            rec(k + 1, left - e, cur, out);
        }
        cur[k] = 0;
    }
    rec(0, degree as u32, &mut cur, &mut out);
    out.sort_by_key(|e| (e.iter().sum::<u32>(), std::cmp::Reverse(e.clone())));
    out
}

/// Tensor-product scalar basis on a model's chart.
#[derive(Debug, Clone)]
pub struct ScalarBasis {
    pub options: BasisOptions,
    n: usize,
    factors: Vec<FactorBasis>,
}

impl ScalarBasis {
    pub fn new(model: &ShrinkerModel, options: BasisOptions) -> Result<Self> {
        options.validate()?;
        let factors = model
            .factors()
            .iter()
            .map(|f| match *f {
                Factor::Circle => FactorBasis::Circle { modes: options.circle_modes },
                Factor::Sphere { dim } => {
                    FactorBasis::Sphere { dim, exponents: sphere_exponents(dim, options.sphere_degree) }
                }
                Factor::Line => FactorBasis::Line { degree: options.line_degree, scale: model.scale() },
                Factor::Interval { lo, hi } => FactorBasis::Interval { degree: options.interval_degree, lo, hi },
            })
            .collect();
        Ok(Self { options, n: model.intrinsic_dim(), factors })
    }

    pub fn len(&self) -> usize {
        self.factors.iter().map(|f| f.len()).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All basis functions at the parameter point `u`, first factor slowest.
    pub fn eval(&self, u: &[f64]) -> Vec<Jet> {
        let mut acc = vec![Jet::constant(1.0, self.n)];
        let mut off = 0;
        for f in &self.factors {
            let vals = f.eval(u, off, self.n);
            let mut next = Vec::with_capacity(acc.len() * vals.len());
            for a in &acc {
                for b in &vals {
                    next.push(a * b);
                }
            }
            acc = next;
            off += match f {
                FactorBasis::Sphere { dim, .. } => *dim,
                _ => 1,
            };
        }
        acc
    }
}
