//! First and second variations of F, and their finite-difference
//! counterparts along the straight-line deformation `x + s V` with
//! `(x0, t0) -> (x0 + s y, t0 + s h)`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::NormalField;
use crate::functional::{kernel_weights, normalization, CenterScale};
use crate::models::{shrinker_residual, DEGENERACY_THRESHOLD};
use crate::par;
use crate::quadrature::WeightedGrid;

/// Shrinker residual above which the closed-form second variation is refused.
pub const CRITICAL_TOLERANCE: f64 = 1e-8;
pub const DEFAULT_STEPS: [f64; 3] = [1e-2, 5e-3, 2.5e-3];

/// Smooth radial cutoff in a subset of ambient coordinates: 1 on
/// `|x'| <= inner`, 0 on `|x'| >= outer`, `C^infinity` in between.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cutoff {
    pub inner: f64,
    pub outer: f64,
    pub coords: Vec<usize>,
}

fn smooth_step(t: f64) -> (f64, f64) {
    // psi(t) = f(t) / (f(t) + f(1 - t)), f(t) = exp(-1/t); returns (psi, psi')
    if t <= 0.0 {
        return (0.0, 0.0);
    }
    if t >= 1.0 {
        return (1.0, 0.0);
    }
    let f = |s: f64| (-1.0 / s).exp();
    let df = |s: f64| (-1.0 / s).exp() / (s * s);
    let (a, b) = (f(t), f(1.0 - t));
    let (da, db) = (df(t), -df(1.0 - t));
    let den = a + b;
    (a / den, (da * den - a * (da + db)) / (den * den))
}

impl Cutoff {
    /// The `phi_j` of the cylinder construction: 1 on `B_j`, 0 outside `B_{j+1}`.
    pub fn ball(j: f64, coords: Vec<usize>) -> Self {
        Self { inner: j, outer: j + 1.0, coords }
    }

    /// Value and ambient gradient at `x`.
    pub fn eval(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let r = self.coords.iter().map(|&c| x[c] * x[c]).sum::<f64>().sqrt();
        let t = (r - self.inner) / (self.outer - self.inner);
        let (psi, dpsi) = smooth_step(t);
        let mut grad = vec![0.0; x.len()];
        if r > 0.0 && dpsi != 0.0 {
            for &c in &self.coords {
                grad[c] = -dpsi / (self.outer - self.inner) * x[c] / r;
            }
        }
        (1.0 - psi, grad)
    }

    /// `phi V` with the product rule for the covariant derivative.
    pub fn apply(&self, grid: &WeightedGrid, v: &NormalField) -> NormalField {
        let (phi, dphi): (Vec<f64>, Vec<Vec<f64>>) = grid
            .geometry
            .iter()
            .map(|g| {
                let (f, grad) = self.eval(&g.position);
                (f, g.tangent_coeffs_of(&grad))
            })
            .unzip();
        v.times_scalar(&phi, &dphi)
    }
}

#[derive(Debug, Clone)]
pub struct NormalVariation {
    pub v: NormalField,
    pub y: Vec<f64>,
    pub h: f64,
    pub support: Option<Cutoff>,
}

impl NormalVariation {
    pub fn new(v: NormalField, y: Vec<f64>, h: f64) -> Self {
        Self { v, y, h, support: None }
    }

    pub fn pure(v: NormalField, ambient: usize) -> Self {
        Self::new(v, vec![0.0; ambient], 0.0)
    }

    /// Multiply `V` by the cutoff and record it as the support.
    pub fn with_support(mut self, grid: &WeightedGrid, cutoff: Cutoff) -> Self {
        self.v = cutoff.apply(grid, &self.v);
        self.support = Some(cutoff);
        self
    }
}

fn check_dims(grid: &WeightedGrid, var: &NormalVariation) -> Result<()> {
    if var.v.p != grid.p() || var.v.len() != grid.len() {
        return Err(Error::DimensionMismatch { expected: grid.p(), got: var.v.p });
    }
    if var.y.len() != grid.ambient() {
        return Err(Error::DimensionMismatch { expected: grid.ambient(), got: var.y.len() });
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `(4 pi t0)^(-n/2) int [ -<H + (x-x0)^perp/(2t0), V> + h(|x-x0|^2/(4t0^2)
/// - n/(2t0)) + <x-x0, y>/(2t0) ] exp(-|x-x0|^2/(4t0))`.
pub fn first_variation(grid: &WeightedGrid, var: &NormalVariation, cs: &CenterScale) -> Result<f64> {
    check_dims(grid, var)?;
    let n = grid.n() as f64;
    let t0 = cs.t0;
    let w = kernel_weights(grid, cs);
    let vals = par::map_range(grid.len(), |q| {
        let g = &grid.geometry[q];
        let d: Vec<f64> = g.position.iter().zip(&cs.x0).map(|(x, c)| x - c).collect();
        let dn = g.normal_coeffs(&d);
        let v = var.v.at(q);
        let normal: f64 = (0..g.p).map(|a| (g.mean_curvature[a] + dn[a] / (2.0 * t0)) * v[a]).sum();
        let d2 = dot(&d, &d);
        (-normal + var.h * (d2 / (4.0 * t0 * t0) - n / (2.0 * t0)) + dot(&d, &var.y) / (2.0 * t0)) * w[q]
    });
    Ok(normalization(grid.n(), t0) * par::tree_sum(&vals))
}

/// Pointwise integrand of the second variation at `(0, 1/2)` (without the
/// `(2 pi)^(-n/2)` factor).
fn second_integrand(grid: &WeightedGrid, a: &NormalVariation, b: &NormalVariation, q: usize) -> f64 {
    let g = &grid.geometry[q];
    let (n, p) = (g.n, g.p);
    let (va, vb) = (a.v.at(q), b.v.at(q));
    let mut grad = 0.0;
    for i in 0..n {
        for al in 0..p {
            grad += a.v.grad(q, i, al) * b.v.grad(q, i, al);
        }
    }
    let mut sig = 0.0;
    for al in 0..p {
        for be in 0..p {
            sig += g.sigma_ab(al, be) * va[al] * vb[be];
        }
    }
    let vv = dot(va, vb);
    let hh = g.sqnorm_h();
    let h_va = dot(&g.mean_curvature, va);
    let h_vb = dot(&g.mean_curvature, vb);
    let ya = g.normal_coeffs(&a.y);
    let yb = g.normal_coeffs(&b.y);
    grad - sig - vv - 2.0 * a.h * b.h * hh - 2.0 * (a.h * h_vb + b.h * h_va) + (dot(&ya, vb) + dot(&yb, va))
        - dot(&ya, &yb)
}

fn require_critical(grid: &WeightedGrid) -> Result<()> {
    let r = shrinker_residual(grid).sup;
    if r > CRITICAL_TOLERANCE {
        return Err(Error::NotACriticalPoint { residual: r, tolerance: CRITICAL_TOLERANCE });
    }
    Ok(())
}

/// Symmetric bilinear form whose diagonal is the second variation at
/// `(0, 1/2)`.
pub fn second_variation_bilinear(grid: &WeightedGrid, a: &NormalVariation, b: &NormalVariation) -> Result<f64> {
    check_dims(grid, a)?;
    check_dims(grid, b)?;
    require_critical(grid)?;
    let vals = par::map_range(grid.len(), |q| second_integrand(grid, a, b, q) * grid.gaussian_weights[q]);
    Ok((2.0 * std::f64::consts::PI).powf(-(grid.n() as f64) / 2.0) * par::tree_sum(&vals))
}

/// `F''` at `(0, 1/2)`:
/// `(2 pi)^(-n/2) int [|nabla V|^2 - sigma(V,V) - |V|^2 - 2h^2|H|^2
/// - 4h<H,V> + 2<y,V> - |y^perp|^2] exp(-|x|^2/2)`.
pub fn second_variation(grid: &WeightedGrid, var: &NormalVariation) -> Result<f64> {
    second_variation_bilinear(grid, var, var)
}

/// `F(s)` for the deformed immersion and center/scale.
pub fn deformed_f(grid: &WeightedGrid, var: &NormalVariation, cs: &CenterScale, s: f64) -> Result<f64> {
    let n = grid.n();
    let t = cs.t0 + s * var.h;
    if !(t > 0.0) {
        return Err(Error::ImmersionLost { s });
    }
    let floor = DEGENERACY_THRESHOLD * grid.model.length_scale().powi(2 * n as i32);
    let x0: Vec<f64> = cs.x0.iter().zip(&var.y).map(|(c, y)| c + s * y).collect();
    let vals = par::map_range(grid.len(), |q| {
        let g = &grid.geometry[q];
        let vamb = var.v.ambient_at(g, q);
        let dv = var.v.ambient_param_derivative(g, q);
        let tang: Vec<Vec<f64>> =
            (0..n).map(|a| g.tangents[a].iter().zip(&dv[a]).map(|(x, d)| x + s * d).collect()).collect();
        let gram = DMatrix::from_fn(n, n, |a, b| dot(&tang[a], &tang[b]));
        let det = gram.determinant();
        if !(det > floor) {
            return None;
        }
        let d2: f64 = g.position.iter().zip(&vamb).zip(&x0).map(|((x, v), c)| (x + s * v - c).powi(2)).sum();
        Some((grid.ln_base[q] + 0.5 * det.ln() - d2 / (4.0 * t)).exp())
    });
    let vals: Option<Vec<f64>> = vals.into_iter().collect();
    let vals = vals.ok_or(Error::ImmersionLost { s })?;
    Ok(normalization(n, t) * par::tree_sum(&vals))
}

/// Richardson table over a geometric step list; `order` is the leading
/// error exponent of the base formula and increases by 2 per level.
fn richardson(values: &[f64], ratio: f64, order: i32) -> f64 {
    let mut row = values.to_vec();
    let mut k = order;
    while row.len() > 1 {
        let f = ratio.powi(k);
        row = row.windows(2).map(|w| (f * w[1] - w[0]) / (f - 1.0)).collect();
        k += 2;
    }
    row[0]
}

fn step_ratio(steps: &[f64]) -> Result<f64> {
    if steps.is_empty() || steps.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::InvalidInput("finite-difference steps must be positive".into()));
    }
    if steps.len() == 1 {
        return Ok(2.0);
    }
    let r = steps[0] / steps[1];
    for w in steps.windows(2) {
        if ((w[0] / w[1]) - r).abs() > 1e-12 * r || r <= 1.0 {
            return Err(Error::InvalidInput("finite-difference steps must decrease geometrically".into()));
        }
    }
    Ok(r)
}

/// Central first derivative of `F(s)` at 0 with Richardson extrapolation.
pub fn fd_first(grid: &WeightedGrid, var: &NormalVariation, cs: &CenterScale, steps: &[f64]) -> Result<f64> {
    let r = step_ratio(steps)?;
    let d: Vec<f64> = steps
        .iter()
        .map(|&s| Ok((deformed_f(grid, var, cs, s)? - deformed_f(grid, var, cs, -s)?) / (2.0 * s)))
        .collect::<Result<_>>()?;
    Ok(richardson(&d, r, 2))
}

/// Five-point second derivative with Richardson extrapolation.
pub fn fd_second(grid: &WeightedGrid, var: &NormalVariation, cs: &CenterScale, steps: &[f64]) -> Result<f64> {
    let r = step_ratio(steps)?;
    let f0 = deformed_f(grid, var, cs, 0.0)?;
    let d: Vec<f64> = steps
        .iter()
        .map(|&s| {
            let f = |k: f64| deformed_f(grid, var, cs, k * s);
            Ok((-f(2.0)? + 16.0 * f(1.0)? - 30.0 * f0 + 16.0 * f(-1.0)? - f(-2.0)?) / (12.0 * s * s))
        })
        .collect::<Result<_>>()?;
    Ok(richardson(&d, r, 4))
}

/// Plain three-point second difference at one step, `O(s^2)` accurate.
pub fn fd_second_three_point(grid: &WeightedGrid, var: &NormalVariation, cs: &CenterScale, s: f64) -> Result<f64> {
    let f0 = deformed_f(grid, var, cs, 0.0)?;
    Ok((deformed_f(grid, var, cs, s)? - 2.0 * f0 + deformed_f(grid, var, cs, -s)?) / (s * s))
}

#[derive(Debug, Clone, Serialize)]
pub struct VariationReport {
    pub analytic_first: f64,
    /// Only defined at `(0, 1/2)` on a shrinker.
    pub analytic_second: Option<f64>,
    pub fd_first: f64,
    pub fd_second: f64,
    pub fd_step: f64,
    pub discrepancy_first: f64,
    pub discrepancy_second: Option<f64>,
}

pub fn relative_discrepancy(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(1e-12)
}

pub fn finite_difference_variation(
    grid: &WeightedGrid,
    var: &NormalVariation,
    cs: &CenterScale,
    steps: &[f64],
) -> Result<VariationReport> {
    check_dims(grid, var)?;
    let analytic_first = first_variation(grid, var, cs)?;
    let standard = cs.t0 == 0.5 && cs.x0.iter().all(|v| *v == 0.0);
    let analytic_second = if standard {
        match second_variation(grid, var) {
            Ok(v) => Some(v),
            Err(Error::NotACriticalPoint { .. }) => None,
            Err(e) => return Err(e),
        }
    } else {
        None
    };
    let fd_first = fd_first(grid, var, cs, steps)?;
    let fd_second = fd_second(grid, var, cs, steps)?;
    Ok(VariationReport {
        analytic_first,
        analytic_second,
        fd_first,
        fd_second,
        fd_step: steps.iter().cloned().fold(f64::INFINITY, f64::min),
        discrepancy_first: relative_discrepancy(analytic_first, fd_first),
        discrepancy_second: analytic_second.map(|a| relative_discrepancy(a, fd_second)),
    })
}

/// Named test variations used by the command line and the checks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum FieldChoice {
    /// `e_last`, the frame vector along the principal normal.
    ConstantNormal,
    /// `x_c e_last` with `x_c` the first line coordinate (first ambient
    /// coordinate on compact models); cut off at `j = 4` on noncompact ones.
    CoordinateTimesNormal,
    /// `Re (x_1 + i x_2)^k e_last`.
    Harmonic(u32),
    /// Normal projection of a random quadratic ambient field.
    Random(u64),
}

impl FieldChoice {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "constant-normal" => Ok(Self::ConstantNormal),
            "coordinate-times-normal" => Ok(Self::CoordinateTimesNormal),
            _ => {
                if let Some(k) = s.strip_prefix("harmonic:") {
                    k.parse().map(Self::Harmonic).map_err(|_| Error::InvalidInput(format!("bad harmonic degree in {s:?}")))
                } else if let Some(k) = s.strip_prefix("random:") {
                    k.parse().map(Self::Random).map_err(|_| Error::InvalidInput(format!("bad seed in {s:?}")))
                } else {
                    Err(Error::InvalidInput(format!("unknown field {s:?}")))
                }
            }
        }
    }

    pub fn build(&self, grid: &WeightedGrid) -> NormalField {
        let p = grid.p();
        let last = p - 1;
        match self {
            Self::ConstantNormal => NormalField::scalar_times_frame(grid, last, |_, g| (1.0, vec![0.0; g.n])),
            Self::CoordinateTimesNormal => {
                let lines = grid.model.line_coords();
                let c = lines.first().copied().unwrap_or(0);
                let v = scalar_field_times_last(grid, move |x| (x[c], unit_vec(x.len(), c)));
                if lines.is_empty() {
                    v
                } else {
                    Cutoff::ball(4.0, lines).apply(grid, &v)
                }
            }
            Self::Harmonic(k) => {
                let k = *k;
                scalar_field_times_last(grid, move |x| harmonic(x, k))
            }
            Self::Random(seed) => random_field(grid, *seed),
        }
    }
}

fn unit_vec(dim: usize, k: usize) -> Vec<f64> {
    let mut e = vec![0.0; dim];
    e[k] = 1.0;
    e
}

/// `Re (x_1 + i x_2)^k` and its ambient gradient.
fn harmonic(x: &[f64], k: u32) -> (f64, Vec<f64>) {
    let z = (x[0], x[1]);
    let mut grad = vec![0.0; x.len()];
    if k == 0 {
        return (1.0, grad);
    }
    let zk = cpow(z, k);
    let dz = cpow(z, k - 1);
    grad[0] = k as f64 * dz.0;
    grad[1] = -(k as f64) * dz.1;
    (zk.0, grad)
}

fn cpow(z: (f64, f64), k: u32) -> (f64, f64) {
    let mut r = (1.0, 0.0);
    for _ in 0..k {
        r = (r.0 * z.0 - r.1 * z.1, r.0 * z.1 + r.1 * z.0);
    }
    r
}

/// `f(x) e_last` for an ambient scalar `f` with ambient gradient.
pub fn scalar_field_times_last<F>(grid: &WeightedGrid, f: F) -> NormalField
where
    F: Fn(&[f64]) -> (f64, Vec<f64>) + Sync + Send,
{
    let last = grid.p() - 1;
    NormalField::scalar_times_frame(grid, last, |_, g| {
        let (v, grad) = f(&g.position);
        let dv = g.tangents.iter().map(|t| dot(t, &grad)).collect();
        (v, dv)
    })
}

/// `(A + B x + x^T C x)^perp` with standard normal coefficients.
pub fn random_field(grid: &WeightedGrid, seed: u64) -> NormalField {
    let big = grid.ambient();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |k: usize| -> Vec<f64> { (0..k).map(|_| rng.sample::<f64, _>(StandardNormal)).collect() };
    let a = draw(big);
    let b = draw(big * big);
    let c = draw(big * big * big);
    let scale = 1.0 / grid.model.length_scale();
    NormalField::from_ambient(grid, move |x| {
        (0..big)
            .map(|i| {
                let mut v = a[i];
                for j in 0..big {
                    v += 0.5 * scale * b[i * big + j] * x[j];
                    for k in 0..big {
                        v += 0.25 * scale * scale * c[(i * big + j) * big + k] * x[j] * x[k];
                    }
                }
                v
            })
            .collect()
    })
}

/// Random `(V, y, h)` for a seed; `V` from [`random_field`].
pub fn random_variation(grid: &WeightedGrid, seed: u64) -> NormalVariation {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let y: Vec<f64> = (0..grid.ambient()).map(|_| 0.3 * rng.sample::<f64, _>(StandardNormal)).collect();
    let h = 0.2 * rng.sample::<f64, _>(StandardNormal);
    NormalVariation::new(random_field(grid, seed), y, h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ShrinkerModel;
    use crate::quadrature::{build_grid, Resolution};

    #[test]
    fn smooth_step_is_monotone_and_flat_at_ends() {
        let mut prev = 0.0;
        for k in 0..=100 {
            let (v, d) = smooth_step(k as f64 / 100.0);
            assert!(v >= prev && d >= 0.0);
            prev = v;
        }
        assert!(smooth_step(1e-3).1 < 1e-100);
    }

    #[test]
    fn cutoff_gradient_matches_difference() {
        let c = Cutoff::ball(1.0, vec![2]);
        let x = [0.3, 0.1, 1.4];
        let (_, g) = c.eval(&x);
        let h = 1e-6;
        let d = (c.eval(&[0.3, 0.1, 1.4 + h]).0 - c.eval(&[0.3, 0.1, 1.4 - h]).0) / (2.0 * h);
        assert!((g[2] - d).abs() < 1e-7);
    }

    #[test]
    fn shrinker_is_critical() {
        let m = ShrinkerModel::sphere(2, 1).unwrap();
        let g = build_grid(&m, Resolution::uniform(24), 10.0).unwrap();
        let var = random_variation(&g, 7);
        let f1 = first_variation(&g, &var, &CenterScale::standard(3)).unwrap();
        assert!(f1.abs() < 1e-10, "{f1}");
    }

    #[test]
    fn second_variation_refused_off_shrinker() {
        let m = ShrinkerModel::sphere(2, 1).unwrap().with_radius(1.0).unwrap();
        let g = build_grid(&m, Resolution::uniform(16), 10.0).unwrap();
        let var = NormalVariation::pure(FieldChoice::ConstantNormal.build(&g), 3);
        assert!(matches!(second_variation(&g, &var), Err(Error::NotACriticalPoint { .. })));
    }

    #[test]
    fn richardson_cancels_quadratic_error() {
        let vals: Vec<f64> = [0.1f64, 0.05, 0.025].iter().map(|s| 1.0 + 3.0 * s * s + 5.0 * s.powi(4)).collect();
        assert!((richardson(&vals, 2.0, 2) - 1.0).abs() < 1e-14);
    }
}
