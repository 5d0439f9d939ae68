//! Gaussian-weighted integrals and inner products on a grid.

use super::grid::WeightedGrid;
use crate::error::{Error, Result};
use crate::fields::NormalField;
use crate::par;

/// `sum_q f_q w_q` with the Gaussian weights.
pub fn integrate(grid: &WeightedGrid, f: &[f64]) -> Result<f64> {
    if f.len() != grid.len() {
        return Err(Error::DimensionMismatch { expected: grid.len(), got: f.len() });
    }
    if let Some(index) = f.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue { index });
    }
    Ok(par::sum_range(f.len(), |q| f[q] * grid.gaussian_weights[q]))
}

/// Integrate a closure evaluated per node.
pub fn integrate_with<F>(grid: &WeightedGrid, f: F) -> Result<f64>
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let vals = par::map_range(grid.len(), f);
    integrate(grid, &vals)
}

pub fn weighted_inner(grid: &WeightedGrid, f: &[f64], g: &[f64]) -> Result<f64> {
    if f.len() != g.len() {
        return Err(Error::DimensionMismatch { expected: f.len(), got: g.len() });
    }
    let prod: Vec<f64> = f.iter().zip(g).map(|(a, b)| a * b).collect();
    integrate(grid, &prod)
}

/// `int <V, W> exp(-|x|^2/2)` for normal sections.
pub fn weighted_inner_fields(grid: &WeightedGrid, v: &NormalField, w: &NormalField) -> Result<f64> {
    if v.p != w.p {
        return Err(Error::DimensionMismatch { expected: v.p, got: w.p });
    }
    if v.len() != grid.len() || w.len() != grid.len() {
        return Err(Error::DimensionMismatch { expected: grid.len(), got: v.len().min(w.len()) });
    }
    integrate_with(grid, |q| v.at(q).iter().zip(w.at(q)).map(|(a, b)| a * b).sum())
}

pub fn weighted_norm_fields(grid: &WeightedGrid, v: &NormalField) -> Result<f64> {
    Ok(weighted_inner_fields(grid, v, v)?.max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ShrinkerModel;
    use crate::quadrature::{build_grid, Resolution};
    use std::f64::consts::PI;

    #[test]
    fn plane_gaussian_mass() {
        for n in 1..=2 {
            let m = ShrinkerModel::plane(n, 1).unwrap();
            let g = build_grid(&m, Resolution::uniform(32), 10.0).unwrap();
            let one = vec![1.0; g.len()];
            let v = integrate(&g, &one).unwrap();
            assert!((v - (2.0 * PI).powf(n as f64 / 2.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn non_finite_reports_index() {
        let m = ShrinkerModel::sphere(1, 1).unwrap();
        let g = build_grid(&m, Resolution::uniform(16), 10.0).unwrap();
        let mut f = vec![0.0; g.len()];
        f[5] = f64::NAN;
        assert_eq!(integrate(&g, &f), Err(Error::NonFiniteValue { index: 5 }));
    }
}
