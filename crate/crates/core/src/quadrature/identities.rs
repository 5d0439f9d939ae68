//! Weighted moment identities satisfied by every self-shrinker with
//! polynomial volume growth.

use serde::Serialize;

use super::grid::WeightedGrid;
use super::integrate::integrate_with;
use crate::error::Result;

pub const IDENTITY_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Serialize)]
pub struct IdentityResidual {
    pub name: &'static str,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentityReport {
    /// `int exp(-|x|^2/2)`, the normalization of every residual.
    pub normalizer: f64,
    pub residuals: Vec<IdentityResidual>,
}

impl IdentityReport {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().map(|r| r.residual).fold(0.0, f64::max)
    }

    pub fn all_within(&self, tol: f64) -> bool {
        self.residuals.iter().all(|r| r.residual <= tol)
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.residuals.iter().find(|r| r.name == name).map(|r| r.residual)
    }
}

/// Residuals, each divided by `int exp(-|x|^2/2)`:
///
/// - `second_moment`: `int (|x|^2 - n)`
/// - `first_moments`: max of `|int x|` and `|int x |x|^2|`
/// - `fourth_moment`: `int (|x|^4 - n(n+2) + 2|H|^2)`
/// - `coordinate_gradient`: max entry of `int (x x^T - P_T)`, i.e.
///   `int <x, w>^2 = int |w^T|^2` over all constant `w`
/// - `variance`: `int ((|x|^2 - n)^2 - 2n) + 2 int |H|^2`
pub fn verify_weighted_identities(grid: &WeightedGrid) -> Result<IdentityReport> {
    let n = grid.n() as f64;
    let big = grid.ambient();
    let geo = &grid.geometry;
    let r2 = |q: usize| geo[q].position.iter().map(|x| x * x).sum::<f64>();
    let norm = integrate_with(grid, |_| 1.0)?;

    let second = integrate_with(grid, |q| r2(q) - n)?;
    let mut first: f64 = 0.0;
    for c in 0..big {
        let a = integrate_with(grid, |q| geo[q].position[c])?;
        let b = integrate_with(grid, |q| geo[q].position[c] * r2(q))?;
        first = first.max(a.abs()).max(b.abs());
    }
    let fourth = integrate_with(grid, |q| r2(q).powi(2) - n * (n + 2.0) + 2.0 * geo[q].sqnorm_h())?;
    let mut coord: f64 = 0.0;
    for a in 0..big {
        for b in a..big {
            let v = integrate_with(grid, |q| {
                let g = &geo[q];
                let pt: f64 = g.tangent_frame.iter().map(|e| e[a] * e[b]).sum();
                g.position[a] * g.position[b] - pt
            })?;
            coord = coord.max(v.abs());
        }
    }
    let variance = integrate_with(grid, |q| (r2(q) - n).powi(2) - 2.0 * n + 2.0 * geo[q].sqnorm_h())?;

    let residuals = [
        ("second_moment", second),
        ("first_moments", first),
        ("fourth_moment", fourth),
        ("coordinate_gradient", coord),
        ("variance", variance),
    ]
    .into_iter()
    .map(|(name, v)| IdentityResidual { name, residual: v.abs() / norm })
    .collect();
    Ok(IdentityReport { normalizer: norm, residuals })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ShrinkerModel;
    use crate::quadrature::{build_grid, Resolution};

    #[test]
    fn sphere_and_cylinder_satisfy_identities() {
        for m in [ShrinkerModel::sphere(2, 1).unwrap(), ShrinkerModel::cylinder(1, 2, 1).unwrap()] {
            let g = build_grid(&m, Resolution::new(32, 48), 10.0).unwrap();
            let r = verify_weighted_identities(&g).unwrap();
            assert!(r.all_within(1e-10), "{}: {:?}", m.name(), r.residuals);
        }
    }

    #[test]
    fn wrong_radius_breaks_moment_identities() {
        let m = ShrinkerModel::sphere(2, 1).unwrap().with_radius(1.0).unwrap();
        let g = build_grid(&m, Resolution::uniform(32), 10.0).unwrap();
        let r = verify_weighted_identities(&g).unwrap();
        assert!((r.get("second_moment").unwrap() - 1.0).abs() < 1e-12);
        assert!((r.get("variance").unwrap() - 5.0).abs() < 1e-12);
    }
}
