//! Tensor-product quadrature grids over a model's parameter domain, carrying
//! the geometry at every node.

use serde::Serialize;

use super::rules::{gauss_hermite, gauss_legendre, gauss_legendre_on, periodic};
use crate::error::{Error, Result};
use crate::models::{evaluate_geometry, Factor, GeometryData, ShrinkerModel};
use crate::par;

pub const DEFAULT_CIRCLE_RES: usize = 128;
pub const DEFAULT_SPHERE_RES: usize = 64;
pub const DEFAULT_LINE_RES: usize = 64;
pub const DEFAULT_TRUNCATION: f64 = 10.0;
pub const MIN_RESOLUTION: usize = 8;
pub const MIN_TRUNCATION: f64 = 6.0;

/// Requested node counts. `None` picks the per-factor default. For a sphere
/// factor of dimension `k` the count is the number of longitude nodes; each
/// colatitude gets half as many (a quarter for `k >= 3`).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Resolution {
    pub compact: Option<usize>,
    pub euclidean: Option<usize>,
}

impl Resolution {
    pub fn uniform(n: usize) -> Self {
        Self { compact: Some(n), euclidean: Some(n) }
    }

    pub fn new(compact: usize, euclidean: usize) -> Self {
        Self { compact: Some(compact), euclidean: Some(euclidean) }
    }

    fn for_factor(&self, f: &Factor) -> usize {
        match f {
            Factor::Line => self.euclidean.unwrap_or(DEFAULT_LINE_RES),
            Factor::Sphere { dim } => self.compact.unwrap_or(if *dim == 2 { DEFAULT_SPHERE_RES } else { 32 }),
            Factor::Circle | Factor::Interval { .. } => self.compact.unwrap_or(DEFAULT_CIRCLE_RES),
        }
    }

    pub fn doubled(&self, model: &ShrinkerModel) -> Self {
        let fs = model.factors();
        let c = fs.iter().find(|f| f.is_compact()).map(|f| self.for_factor(f));
        let e = fs.iter().find(|f| !f.is_compact()).map(|f| self.for_factor(f));
        Self { compact: c.map(|v| 2 * v).or(self.compact), euclidean: e.map(|v| 2 * v).or(self.euclidean) }
    }
}

/// Nodes of one factor: parameter values and log base weights.
struct FactorNodes {
    params: Vec<Vec<f64>>,
    ln_base: Vec<f64>,
}

/// Gaussian that the Hermite nodes of each line factor are adapted to:
/// `exp(-(s - center)^2 / (2 sigma^2))` in ambient units.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LineKernel {
    pub centers: Vec<f64>,
    pub sigma: f64,
}

impl LineKernel {
    pub fn standard(lines: usize) -> Self {
        Self { centers: vec![0.0; lines], sigma: 1.0 }
    }
}

fn factor_nodes(f: &Factor, res: usize, truncation: f64, scale: f64, line: (f64, f64)) -> FactorNodes {
    match *f {
        Factor::Circle => {
            let r = periodic(res);
            FactorNodes { params: r.nodes.iter().map(|t| vec![*t]).collect(), ln_base: r.weights.iter().map(|w| w.ln()).collect() }
        }
        Factor::Interval { lo, hi } => {
            let r = gauss_legendre_on(res, lo, hi);
            FactorNodes { params: r.nodes.iter().map(|t| vec![*t]).collect(), ln_base: r.weights.iter().map(|w| w.ln()).collect() }
        }
        Factor::Line => {
            // Nodes are placed in ambient units so the Hermite weight matches
            // the Gaussian density of the embedded line.
            let (center, sigma) = line;
            let r = gauss_hermite(res);
            let mut params = Vec::new();
            let mut ln_base = Vec::new();
            for (s, w) in r.nodes.iter().zip(&r.weights) {
                if s.abs() <= truncation {
                    params.push(vec![(center + sigma * s) / scale]);
                    ln_base.push(w.ln() + sigma.ln() - scale.ln() + 0.5 * s * s);
                }
            }
            FactorNodes { params, ln_base }
        }
        Factor::Sphere { dim } => {
            let colat = if dim == 2 { (res / 2).max(4) } else { (res / 4).max(4) };
            let mut acc = FactorNodes { params: vec![Vec::new()], ln_base: vec![0.0] };
            for j in 0..dim - 1 {
                let power = dim - 1 - j;
                let (nodes, lw): (Vec<f64>, Vec<f64>) = if power % 2 == 1 {
                    let r = gauss_legendre(colat);
                    r.nodes
                        .iter()
                        .zip(&r.weights)
                        .map(|(t, w)| {
                            let th = t.acos();
                            (th, w.ln() - th.sin().ln())
                        })
                        .unzip()
                } else {
                    // interior uniform nodes: exact for sin^2 times a cosine
                    // polynomial of degree below 2 colat + 2
                    let h = std::f64::consts::PI / (colat + 1) as f64;
                    (1..=colat).map(|j| (j as f64 * h, h.ln())).unzip()
                };
                acc = product(&acc, &FactorNodes { params: nodes.iter().map(|t| vec![*t]).collect(), ln_base: lw });
            }
            let r = periodic(res);
            product(
                &acc,
                &FactorNodes { params: r.nodes.iter().map(|t| vec![*t]).collect(), ln_base: r.weights.iter().map(|w| w.ln()).collect() },
            )
        }
    }
}

fn product(a: &FactorNodes, b: &FactorNodes) -> FactorNodes {
    let mut params = Vec::with_capacity(a.params.len() * b.params.len());
    let mut ln_base = Vec::with_capacity(params.capacity());
    for (pa, la) in a.params.iter().zip(&a.ln_base) {
        for (pb, lb) in b.params.iter().zip(&b.ln_base) {
            let mut p = pa.clone();
            p.extend_from_slice(pb);
            params.push(p);
            ln_base.push(la + lb);
        }
    }
    FactorNodes { params, ln_base }
}

/// Quadrature nodes with their geometry and weights. Immutable once built.
#[derive(Debug, Clone)]
pub struct WeightedGrid {
    pub model: ShrinkerModel,
    pub nodes: Vec<Vec<f64>>,
    /// Natural log of the parameter-space weights.
    pub ln_base: Vec<f64>,
    pub geometry: Vec<GeometryData>,
    /// `base * sqrt(det g)`.
    pub measure_weights: Vec<f64>,
    /// `measure * exp(-|x|^2 / 2)`.
    pub gaussian_weights: Vec<f64>,
    pub resolution: Vec<usize>,
    pub truncation: f64,
    pub request: Resolution,
    pub line_kernel: LineKernel,
}

pub fn build_grid(model: &ShrinkerModel, resolution: Resolution, truncation: f64) -> Result<WeightedGrid> {
    let lines = model.factors().iter().filter(|f| !f.is_compact()).count();
    build_grid_with_kernel(model, resolution, truncation, LineKernel::standard(lines))
}

/// Grid whose line factors are adapted to a given Gaussian.
pub fn build_grid_with_kernel(
    model: &ShrinkerModel,
    resolution: Resolution,
    truncation: f64,
    kernel: LineKernel,
) -> Result<WeightedGrid> {
    let factors = model.factors();
    let noncompact = factors.iter().any(|f| !f.is_compact());
    if noncompact && !model.growth_asserted() {
        return Err(Error::UnsupportedDomain(format!(
            "{} is noncompact without an asserted polynomial volume growth",
            model.name()
        )));
    }
    if noncompact && !(truncation >= MIN_TRUNCATION) {
        return Err(Error::InvalidInput(format!("truncation {truncation} below {MIN_TRUNCATION}")));
    }
    let counts: Vec<usize> = factors.iter().map(|f| resolution.for_factor(f)).collect();
    if let Some(c) = counts.iter().find(|&&c| c < MIN_RESOLUTION) {
        return Err(Error::InvalidInput(format!("resolution {c} below {MIN_RESOLUTION} nodes per factor")));
    }

    let mut acc = FactorNodes { params: vec![Vec::new()], ln_base: vec![0.0] };
    let mut line_index = 0;
    for (f, &c) in factors.iter().zip(&counts) {
        let line = if f.is_compact() {
            (0.0, 1.0)
        } else {
            line_index += 1;
            (kernel.centers.get(line_index - 1).copied().unwrap_or(0.0), kernel.sigma)
        };
        acc = product(&acc, &factor_nodes(f, c, truncation, model.scale(), line));
    }
    let FactorNodes { params: nodes, ln_base } = acc;

    let geometry = par::try_map_range(nodes.len(), |i| evaluate_geometry(model, &nodes[i]))?;
    let measure_weights: Vec<f64> = (0..nodes.len()).map(|i| (ln_base[i] + geometry[i].sqrt_det.ln()).exp()).collect();
    let gaussian_weights: Vec<f64> = (0..nodes.len())
        .map(|i| {
            let r2: f64 = geometry[i].position.iter().map(|x| x * x).sum();
            (ln_base[i] + geometry[i].sqrt_det.ln() - 0.5 * r2).exp()
        })
        .collect();
    if let Some(i) = gaussian_weights.iter().position(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::NonFiniteValue { index: i });
    }
    Ok(WeightedGrid {
        model: model.clone(),
        nodes,
        ln_base,
        geometry,
        measure_weights,
        gaussian_weights,
        resolution: counts,
        truncation: if noncompact { truncation } else { f64::INFINITY },
        request: resolution,
        line_kernel: kernel,
    })
}

/// Grid at default resolution and truncation.
pub fn default_grid(model: &ShrinkerModel) -> Result<WeightedGrid> {
    build_grid(model, Resolution::default(), DEFAULT_TRUNCATION)
}

impl WeightedGrid {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn n(&self) -> usize {
        self.model.intrinsic_dim()
    }

    pub fn p(&self) -> usize {
        self.model.codim()
    }

    pub fn ambient(&self) -> usize {
        self.model.ambient_dim()
    }

    pub fn total_measure(&self) -> f64 {
        par::tree_sum(&self.measure_weights)
    }

    pub fn total_gaussian(&self) -> f64 {
        par::tree_sum(&self.gaussian_weights)
    }

    pub fn has_lines(&self) -> bool {
        !self.line_kernel.centers.is_empty()
    }

    /// Same model and resolution with line nodes adapted to `kernel`.
    pub fn with_line_kernel(&self, kernel: LineKernel) -> Result<WeightedGrid> {
        if kernel == self.line_kernel {
            return Ok(self.clone());
        }
        build_grid_with_kernel(&self.model, self.request, self.truncation, kernel)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn unit_circle_length() {
        let m = ShrinkerModel::sphere(1, 1).unwrap().with_radius(1.0).unwrap();
        let g = build_grid(&m, Resolution::uniform(16), 10.0).unwrap();
        assert!((g.total_measure() - 2.0 * PI).abs() < 1e-13);
    }

    #[test]
    fn gaussian_line_normalization() {
        let m = ShrinkerModel::plane(1, 1).unwrap();
        let g = build_grid(&m, Resolution::uniform(64), 10.0).unwrap();
        assert!((g.total_gaussian() - (2.0 * PI).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn sphere_areas() {
        for (n, area) in [(2usize, 8.0 * PI), (3, 2.0 * PI * PI * 3f64.powf(1.5))] {
            let m = ShrinkerModel::sphere(n, 1).unwrap();
            let g = build_grid(&m, Resolution::uniform(64), 10.0).unwrap();
            assert!(((g.total_measure() - area) / area).abs() < 1e-12, "n={n}");
        }
    }

    #[test]
    fn noncompact_custom_needs_growth_flag() {
        use crate::models::CustomChart;
        use std::sync::Arc;
        let chart = CustomChart {
            name: "graph".into(),
            intrinsic_dim: 1,
            ambient_dim: 2,
            factors: vec![Factor::Line],
            position: Arc::new(|u: &[f64]| vec![u[0], 0.1 * u[0]]),
            closed: false,
            growth_asserted: false,
            minimal_in_sphere: false,
            parallel_principal_normal: false,
        };
        let m = ShrinkerModel::custom(chart).unwrap();
        assert!(matches!(default_grid(&m), Err(Error::UnsupportedDomain(_))));
    }

    #[test]
    fn rejects_coarse_resolution_and_short_truncation() {
        let m = ShrinkerModel::plane(1, 1).unwrap();
        assert!(build_grid(&m, Resolution::uniform(4), 10.0).is_err());
        assert!(build_grid(&m, Resolution::uniform(32), 3.0).is_err());
    }
}
