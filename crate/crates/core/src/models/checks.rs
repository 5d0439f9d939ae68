//! Grid-wide checks on a model: the shrinker equation, parallel principal
//! normal, minimality in the sphere.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::NormalField;
use crate::quadrature::WeightedGrid;

use super::geometry::VANISHING_H;

/// Threshold on `max |nabla^perp nu|`; the derivative of `H` is differenced.
pub const PARALLEL_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct ShrinkerResidual {
    /// `|H + x^perp|` per node.
    pub pointwise: Vec<f64>,
    pub sup: f64,
}

/// `|H + x^perp|` at every node (center 0, scale 1/2).
pub fn shrinker_residual(grid: &WeightedGrid) -> ShrinkerResidual {
    let pointwise: Vec<f64> = grid
        .geometry
        .iter()
        .map(|g| {
            let xn = g.normal_coeffs(&g.position);
            g.mean_curvature.iter().zip(&xn).map(|(h, x)| (h + x).powi(2)).sum::<f64>().sqrt()
        })
        .collect();
    let sup = pointwise.iter().cloned().fold(0.0, f64::max);
    ShrinkerResidual { pointwise, sup }
}

#[derive(Debug, Clone, Serialize)]
pub struct ParallelNormalReport {
    pub parallel: bool,
    pub max_grad_nu: f64,
}

/// `nabla^perp nu = (nabla^perp H - <nabla^perp H, nu> nu) / |H|`.
pub fn check_parallel_principal_normal(grid: &WeightedGrid) -> Result<ParallelNormalReport> {
    let scale = grid.model.length_scale();
    let vanishing: Vec<usize> = (0..grid.len())
        .filter(|&q| grid.geometry[q].sqnorm_h().sqrt() <= VANISHING_H / scale)
        .collect();
    if !vanishing.is_empty() {
        return Err(Error::VanishingMeanCurvature { nodes: vanishing });
    }
    let h = NormalField::mean_curvature(grid);
    let (n, p) = (grid.n(), grid.p());
    let mut worst: f64 = 0.0;
    for q in 0..grid.len() {
        let g = &grid.geometry[q];
        let hn = g.sqnorm_h().sqrt();
        let nu = g.principal_normal.as_ref().expect("nonvanishing H");
        for i in 0..n {
            let dh: Vec<f64> = (0..p).map(|a| h.grad(q, i, a)).collect();
            let along: f64 = dh.iter().zip(nu).map(|(a, b)| a * b).sum();
            let norm: f64 = dh.iter().zip(nu).map(|(d, v)| (d - along * v).powi(2)).sum::<f64>().sqrt() / hn;
            worst = worst.max(norm);
        }
    }
    if !worst.is_finite() {
        return Err(Error::InvalidInput("principal normal derivative is not finite".into()));
    }
    Ok(ParallelNormalReport { parallel: worst <= PARALLEL_TOLERANCE, max_grad_nu: worst })
}

/// Largest of `| |x| - sqrt(n) |` and `|H + x|`; the latter forces `x` to be
/// normal, so vanishing of both means minimal in the sphere of radius
/// `sqrt(n)`.
pub fn check_minimal_in_sphere(grid: &WeightedGrid, tol: f64) -> Result<f64> {
    let rn = (grid.n() as f64).sqrt();
    let mut worst: f64 = 0.0;
    for g in &grid.geometry {
        let r = g.position.iter().map(|x| x * x).sum::<f64>().sqrt();
        let hv = g.mean_curvature_vector();
        let e = hv.iter().zip(&g.position).map(|(h, x)| (h + x).powi(2)).sum::<f64>().sqrt();
        worst = worst.max((r - rn).abs()).max(e);
    }
    if worst > tol {
        return Err(Error::NotMinimalInSphere(format!("residual {worst:.3e} exceeds {tol:.1e}")));
    }
    Ok(worst)
}
