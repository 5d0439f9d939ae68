//! The F-functional, entropy, scaling and product identities, and the
//! monotonicity equality along the shrinking sphere.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::models::ShrinkerModel;
use crate::nelder_mead::{minimize, NelderMeadOptions};
use crate::par;
use crate::quadrature::{build_grid, LineKernel, Resolution, WeightedGrid};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CenterScale {
    pub x0: Vec<f64>,
    pub t0: f64,
}

impl CenterScale {
    pub fn new(x0: Vec<f64>, t0: f64) -> Result<Self> {
        if !(t0 > 0.0) || x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("center/scale needs finite x0 and t0 > 0, got t0={t0}")));
        }
        Ok(Self { x0, t0 })
    }

    /// `(0, 1/2)`, the normalization of a self-shrinker.
    pub fn standard(ambient: usize) -> Self {
        Self { x0: vec![0.0; ambient], t0: 0.5 }
    }
}

/// `exp(-|x - x0|^2 / (4 t0))` times the measure weight, per node.
pub(crate) fn kernel_weights(grid: &WeightedGrid, cs: &CenterScale) -> Vec<f64> {
    par::map_range(grid.len(), |q| {
        let g = &grid.geometry[q];
        let d2: f64 = g.position.iter().zip(&cs.x0).map(|(x, c)| (x - c).powi(2)).sum();
        (grid.ln_base[q] + g.sqrt_det.ln() - d2 / (4.0 * cs.t0)).exp()
    })
}

pub(crate) fn normalization(n: usize, t0: f64) -> f64 {
    (4.0 * PI * t0).powf(-(n as f64) / 2.0)
}

/// Line kernel matching the heat kernel centered at `cs`.
pub(crate) fn kernel_for(grid: &WeightedGrid, cs: &CenterScale) -> LineKernel {
    let coords = grid.model.line_coords();
    let lines = grid.line_kernel.centers.len();
    let centers = (0..lines).map(|j| coords.get(j).map_or(0.0, |&c| cs.x0[c])).collect();
    LineKernel { centers, sigma: (2.0 * cs.t0).sqrt() }
}

/// `(4 pi t0)^(-n/2) int exp(-|x - x0|^2 / (4 t0)) dmu`. On models with line
/// factors the Hermite nodes are re-centered on the kernel first.
pub fn f_value(grid: &WeightedGrid, cs: &CenterScale) -> Result<f64> {
    if cs.x0.len() != grid.ambient() {
        return Err(Error::DimensionMismatch { expected: grid.ambient(), got: cs.x0.len() });
    }
    if !(cs.t0 > 0.0) {
        return Err(Error::InvalidInput(format!("t0 must be positive, got {}", cs.t0)));
    }
    if grid.has_lines() {
        let kernel = kernel_for(grid, cs);
        if kernel != grid.line_kernel {
            let adapted = grid.with_line_kernel(kernel)?;
            return Ok(normalization(grid.n(), cs.t0) * par::tree_sum(&kernel_weights(&adapted, cs)));
        }
    }
    Ok(normalization(grid.n(), cs.t0) * par::tree_sum(&kernel_weights(grid, cs)))
}

/// `|F_{a x0, a^2 t0}(a M) - F_{x0, t0}(M)|`.
pub fn scaling_invariance_check(
    model: &ShrinkerModel,
    alpha: f64,
    cs: &CenterScale,
    resolution: Resolution,
    truncation: f64,
) -> Result<f64> {
    if !(0.1..=10.0).contains(&alpha) {
        return Err(Error::InvalidInput(format!("scale factor {alpha} outside [0.1, 10]")));
    }
    let base = build_grid(model, resolution, truncation)?;
    let scaled = build_grid(&model.clone().scaled(alpha)?, resolution, truncation)?;
    let scs = CenterScale::new(cs.x0.iter().map(|v| alpha * v).collect(), alpha * alpha * cs.t0)?;
    Ok((f_value(&scaled, &scs)? - f_value(&base, cs)?).abs())
}

/// `|F_{x,t0}(N x R^(n-k)) - F_{x',t0}(N)|` for a cylinder and its round
/// factor, `x'` dropping the line coordinates.
pub fn product_splitting_check(
    cylinder: &ShrinkerModel,
    x: &[f64],
    t0: f64,
    resolution: Resolution,
    truncation: f64,
) -> Result<f64> {
    let round = cylinder.compact_part()?;
    let lines = cylinder.line_coords();
    let xp: Vec<f64> = (0..x.len()).filter(|c| !lines.contains(c)).map(|c| x[c]).collect();
    let gm = build_grid(cylinder, resolution, truncation)?;
    let gn = build_grid(&round, resolution, truncation)?;
    Ok((f_value(&gm, &CenterScale::new(x.to_vec(), t0)?)? - f_value(&gn, &CenterScale::new(xp, t0)?)?).abs())
}

/// First variation of `F` in the center/scale directions alone: the `h`
/// coefficient and the `y` coefficients for each ambient basis vector.
#[derive(Debug, Clone, Serialize)]
pub struct Stationarity {
    pub h_term: f64,
    pub y_terms: Vec<f64>,
}

impl Stationarity {
    pub fn max_abs(&self) -> f64 {
        self.y_terms.iter().fold(self.h_term.abs(), |m, v| m.max(v.abs()))
    }
}

pub fn center_scale_stationarity(grid: &WeightedGrid, cs: &CenterScale) -> Result<Stationarity> {
    let adapted;
    let grid = if grid.has_lines() {
        adapted = grid.with_line_kernel(kernel_for(grid, cs))?;
        &adapted
    } else {
        grid
    };
    let n = grid.n() as f64;
    let w = kernel_weights(grid, cs);
    let norm = normalization(grid.n(), cs.t0);
    let t0 = cs.t0;
    let diff = |q: usize| -> Vec<f64> {
        grid.geometry[q].position.iter().zip(&cs.x0).map(|(x, c)| x - c).collect()
    };
    let h_vals = par::map_range(grid.len(), |q| {
        let d2: f64 = diff(q).iter().map(|v| v * v).sum();
        (d2 / (4.0 * t0 * t0) - n / (2.0 * t0)) * w[q]
    });
    let h_term = norm * par::tree_sum(&h_vals);
    let y_terms = (0..grid.ambient())
        .map(|k| {
            let vals = par::map_range(grid.len(), |q| diff(q)[k] / (2.0 * t0) * w[q]);
            norm * par::tree_sum(&vals)
        })
        .collect();
    Ok(Stationarity { h_term, y_terms })
}

#[derive(Debug, Clone, Serialize)]
pub struct EntropyReport {
    pub lambda: f64,
    pub argmax: CenterScale,
    pub stationarity: Stationarity,
    /// The maximum is attained along a continuum (planes).
    pub flat_direction: bool,
    pub evaluations: usize,
    pub restarts: usize,
}

/// Derivative-free maximization of `F` over `(x0, log t0)` with restarts.
pub fn entropy(grid: &WeightedGrid, seed: &CenterScale) -> Result<EntropyReport> {
    let big = grid.ambient();
    if seed.x0.len() != big {
        return Err(Error::DimensionMismatch { expected: big, got: seed.x0.len() });
    }
    let objective = |z: &[f64]| -> f64 {
        let cs = CenterScale { x0: z[..big].to_vec(), t0: z[big].exp() };
        -f_value(grid, &cs).unwrap_or(f64::NAN)
    };
    let opts = NelderMeadOptions { initial_step: 0.2, ..Default::default() };
    let starts = restart_points(seed);
    let mut best: Option<crate::nelder_mead::NelderMeadResult> = None;
    let mut evaluations = 0;
    for s in &starts {
        let r = minimize(objective, s, &opts);
        evaluations += r.evaluations;
        if best.as_ref().map_or(true, |b| r.f < b.f) {
            best = Some(r);
        }
    }
    let best = best.expect("at least one start");
    if !best.converged {
        return Err(Error::NonConvergence { iterations: best.iterations, best: -best.f });
    }
    let argmax = CenterScale { x0: best.x[..big].to_vec(), t0: best.x[big].exp() };
    let lambda = -best.f;
    let stationarity = center_scale_stationarity(grid, &argmax)?;
    let flat_direction = {
        let mut probe = argmax.clone();
        probe.t0 *= 2.0;
        (f_value(grid, &probe)? - lambda).abs() < 1e-9
    };
    Ok(EntropyReport { lambda, argmax, stationarity, flat_direction, evaluations, restarts: starts.len() })
}

/// The seed and seven deterministic perturbations of it.
fn restart_points(seed: &CenterScale) -> Vec<Vec<f64>> {
    let big = seed.x0.len();
    let mut base = seed.x0.clone();
    base.push(seed.t0.ln());
    let mut out = vec![base.clone()];
    for k in 0..7usize {
        let mut z = base.clone();
        let c = k % (big + 1);
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        z[c] += sign * 0.3 * (1.0 + (k / (big + 1)) as f64);
        out.push(z);
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct MonotonicityReport {
    pub n: usize,
    /// `(t, d/dt int Phi)` at each step.
    pub derivatives: Vec<(f64, f64)>,
    pub max_abs_derivative: f64,
}

/// `int_{M_t} Phi_{(0, t0)}(x, t) dmu` for a round `n`-sphere of radius `r`
/// evaluated by quadrature.
fn sphere_heat_integral(n: usize, r: f64, t0: f64, t: f64) -> Result<f64> {
    let m = ShrinkerModel::sphere(n, 1)?.scaled(r / (n as f64).sqrt())?;
    let g = build_grid(&m, Resolution::uniform(16), 10.0)?;
    f_value(&g, &CenterScale::standard(n + 1).with_t0(t0 - t))
}

impl CenterScale {
    fn with_t0(mut self, t0: f64) -> Self {
        self.t0 = t0;
        self
    }
}

/// Central difference in `t` with one Richardson step.
fn time_derivative<F: Fn(f64) -> Result<f64>>(f: F, t: f64, dt: f64) -> Result<f64> {
    let d = |h: f64| -> Result<f64> { Ok((f(t + h)? - f(t - h)?) / (2.0 * h)) };
    let (d1, d2) = (d(dt)?, d(dt / 2.0)?);
    Ok((4.0 * d2 - d1) / 3.0)
}

pub const MONOTONICITY_T0: f64 = 0.5;

/// `d/dt int_{M_t} Phi` along the exact shrinking sphere
/// `r(t) = sqrt(2 n (t0 - t))` for `t` in `[0, 0.4]`.
pub fn monotonicity_equality_check(n: usize, steps: usize) -> Result<MonotonicityReport> {
    if steps == 0 {
        return Err(Error::InvalidInput("need at least one time step".into()));
    }
    let t0 = MONOTONICITY_T0;
    let radius = |t: f64| (2.0 * n as f64 * (t0 - t)).sqrt();
    let dt = 1e-3;
    let derivatives: Vec<(f64, f64)> = (0..steps)
        .map(|k| {
            let t = if steps == 1 { 0.0 } else { 0.4 * k as f64 / (steps - 1) as f64 };
            time_derivative(|s| sphere_heat_integral(n, radius(s), t0, s), t, dt).map(|d| (t, d))
        })
        .collect::<Result<_>>()?;
    let max_abs_derivative = derivatives.iter().map(|(_, d)| d.abs()).fold(0.0, f64::max);
    Ok(MonotonicityReport { n, derivatives, max_abs_derivative })
}

/// Control: the unit sphere moving by mean curvature, `r^2 = 1 - 2 n t`,
/// against the kernel centered at `(0, 1/2)`. Returns the time derivative at
/// `t = 0` and the right-hand side `-int |H + x^perp/(2(t0 - t))|^2 Phi`.
pub fn off_center_sphere_derivative(n: usize) -> Result<(f64, f64)> {
    let t0 = MONOTONICITY_T0;
    let radius = |t: f64| (1.0 - 2.0 * n as f64 * t).sqrt();
    let d = time_derivative(|s| sphere_heat_integral(n, radius(s), t0, s), 0.0, 1e-3)?;
    let r = radius(0.0);
    let defect = (-(n as f64) / r + r / (2.0 * t0)).powi(2);
    let rhs = -defect * sphere_heat_integral(n, r, t0, 0.0)?;
    Ok((d, rhs))
}
