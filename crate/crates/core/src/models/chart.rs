//! Parametric charts for the model self-shrinkers.
//!
//! Catalog models are products of round spheres and lines sitting in
//! orthogonal coordinate blocks of the ambient space. Their positions,
//! derivatives and normal frames are evaluated with exact jets. Custom charts
//! supply only a position map and are differentiated numerically.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::Jet;

/// One factor of a product parameter domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Factor {
    /// Angle on `[0, 2 pi)`, periodic.
    Circle,
    /// Hyperspherical angles of the unit `S^dim`, `dim >= 2`: colatitudes
    /// in `(0, pi)` followed by a longitude in `[0, 2 pi)`.
    Sphere { dim: usize },
    /// The whole real line.
    Line,
    /// A bounded interval.
    Interval { lo: f64, hi: f64 },
}

impl Factor {
    pub fn param_dim(&self) -> usize {
        match self {
            Factor::Sphere { dim } => *dim,
            _ => 1,
        }
    }

    pub fn is_compact(&self) -> bool {
        !matches!(self, Factor::Line)
    }

    /// Nominal extent of each parameter, used to scale finite-difference steps.
    pub fn extents(&self) -> Vec<f64> {
        use std::f64::consts::PI;
        match self {
            Factor::Circle => vec![2.0 * PI],
            Factor::Sphere { dim } => {
                let mut e = vec![PI; dim - 1];
                e.push(2.0 * PI);
                e
            }
            Factor::Line => vec![1.0],
            Factor::Interval { lo, hi } => vec![hi - lo],
        }
    }

    /// A parameter point away from poles and seams.
    pub fn reference_point(&self) -> Vec<f64> {
        match self {
            Factor::Circle => vec![0.3],
            Factor::Sphere { dim } => {
                let mut u = vec![1.1; dim - 1];
                u.push(0.3);
                u
            }
            Factor::Line => vec![0.1],
            Factor::Interval { lo, hi } => vec![lo + 0.37 * (hi - lo)],
        }
    }
}

/// How first and second derivatives of the position map are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DerivativeMode {
    Analytic,
    /// Central differences; steps are relative to each parameter's extent.
    FiniteDifference { first_step: f64, second_step: f64 },
}

impl DerivativeMode {
    pub fn default_finite_difference() -> Self {
        DerivativeMode::FiniteDifference { first_step: 1e-5, second_step: 1e-4 }
    }
}

pub type PositionFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// A user-supplied immersion, registered through the library API.
#[derive(Clone)]
pub struct CustomChart {
    pub name: String,
    pub intrinsic_dim: usize,
    pub ambient_dim: usize,
    pub factors: Vec<Factor>,
    pub position: PositionFn,
    pub closed: bool,
    /// The user asserts polynomial volume growth for noncompact charts.
    pub growth_asserted: bool,
    /// Chart is claimed to lie in the sphere of radius `sqrt(n)`.
    pub minimal_in_sphere: bool,
    pub parallel_principal_normal: bool,
}

impl fmt::Debug for CustomChart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomChart")
            .field("name", &self.name)
            .field("intrinsic_dim", &self.intrinsic_dim)
            .field("ambient_dim", &self.ambient_dim)
            .field("factors", &self.factors)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub enum ModelKind {
    Sphere { n: usize, p: usize },
    Plane { n: usize, p: usize },
    Cylinder { k: usize, n: usize, p: usize },
    CliffordTorus,
    Custom(CustomChart),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Block {
    /// Round sphere of dimension `dim` and radius `radius` in ambient
    /// coordinates `offset..offset + dim + 1`.
    Round { dim: usize, radius: f64, offset: usize },
    Line { offset: usize },
}

/// A model self-shrinker (or a deliberately perturbed control) together with
/// its chart.
#[derive(Debug, Clone)]
pub struct ShrinkerModel {
    kind: ModelKind,
    n: usize,
    ambient: usize,
    factors: Vec<Factor>,
    blocks: Vec<Block>,
    flat_coords: Vec<usize>,
    /// Constant rotation mixing the round-block normals; last row is the
    /// principal direction.
    block_mix: Vec<Vec<f64>>,
    scale: f64,
    mode: DerivativeMode,
    /// Ambient basis indices seeding the numerical normal frame of custom
    /// charts with codimension above one.
    pivots: Vec<usize>,
}

impl ShrinkerModel {
    pub fn sphere(n: usize, p: usize) -> Result<Self> {
        check_dims(n, p)?;
        let blocks = vec![Block::Round { dim: n, radius: (n as f64).sqrt(), offset: 0 }];
        Self::from_blocks(ModelKind::Sphere { n, p }, n, n + p, blocks)
    }

    pub fn plane(n: usize, p: usize) -> Result<Self> {
        check_dims(n, p)?;
        let blocks = (0..n).map(|i| Block::Line { offset: i }).collect();
        Self::from_blocks(ModelKind::Plane { n, p }, n, n + p, blocks)
    }

    /// `S^k(sqrt k) x R^(n-k)` in `R^(n+p)`.
    pub fn cylinder(k: usize, n: usize, p: usize) -> Result<Self> {
        check_dims(n, p)?;
        if k == 0 || k >= n {
            return Err(Error::InvalidInput(format!("cylinder needs 1 <= k < n, got k={k}, n={n}")));
        }
        let mut blocks = vec![Block::Round { dim: k, radius: (k as f64).sqrt(), offset: 0 }];
        blocks.extend((0..n - k).map(|i| Block::Line { offset: k + 1 + i }));
        Self::from_blocks(ModelKind::Cylinder { k, n, p }, n, n + p, blocks)
    }

    /// `S^1(1) x S^1(1)` in `R^4`.
    pub fn clifford_torus() -> Result<Self> {
        let blocks = vec![
            Block::Round { dim: 1, radius: 1.0, offset: 0 },
            Block::Round { dim: 1, radius: 1.0, offset: 2 },
        ];
        Self::from_blocks(ModelKind::CliffordTorus, 2, 4, blocks)
    }

    pub fn custom(chart: CustomChart) -> Result<Self> {
        let pd: usize = chart.factors.iter().map(|f| f.param_dim()).sum();
        if pd != chart.intrinsic_dim {
            return Err(Error::DimensionMismatch { expected: chart.intrinsic_dim, got: pd });
        }
        check_dims(chart.intrinsic_dim, chart.ambient_dim.saturating_sub(chart.intrinsic_dim))?;
        let mut model = Self {
            n: chart.intrinsic_dim,
            ambient: chart.ambient_dim,
            factors: chart.factors.clone(),
            blocks: Vec::new(),
            flat_coords: Vec::new(),
            block_mix: Vec::new(),
            scale: 1.0,
            mode: DerivativeMode::default_finite_difference(),
            pivots: Vec::new(),
            kind: ModelKind::Custom(chart),
        };
        model.pivots = super::geometry::choose_pivots(&model)?;
        Ok(model)
    }

    fn from_blocks(kind: ModelKind, n: usize, ambient: usize, blocks: Vec<Block>) -> Result<Self> {
        let mut used = vec![false; ambient];
        let mut factors = Vec::new();
        for b in &blocks {
            match *b {
                Block::Round { dim, offset, .. } => {
                    used[offset..offset + dim + 1].iter_mut().for_each(|u| *u = true);
                    factors.push(if dim == 1 { Factor::Circle } else { Factor::Sphere { dim } });
                }
                Block::Line { offset } => {
                    used[offset] = true;
                    factors.push(Factor::Line);
                }
            }
        }
        let flat_coords = (0..ambient).filter(|&i| !used[i]).collect();
        let radii: Vec<f64> = blocks
            .iter()
            .filter_map(|b| match b {
                Block::Round { radius, .. } => Some(*radius),
                _ => None,
            })
            .collect();
        let block_mix = principal_rotation(&radii);
        Ok(Self {
            kind,
            n,
            ambient,
            factors,
            blocks,
            flat_coords,
            block_mix,
            scale: 1.0,
            mode: DerivativeMode::Analytic,
            pivots: Vec::new(),
        })
    }

    /// Override the radius of the round factor (single round block only).
    /// Used for non-shrinker controls.
    pub fn with_radius(mut self, r: f64) -> Result<Self> {
        let rounds: Vec<usize> = (0..self.blocks.len())
            .filter(|&i| matches!(self.blocks[i], Block::Round { .. }))
            .collect();
        if rounds.len() != 1 || !(r > 0.0) {
            return Err(Error::InvalidInput("radius override needs one round factor and r > 0".into()));
        }
        if let Block::Round { radius, .. } = &mut self.blocks[rounds[0]] {
            *radius = r;
        }
        Ok(self)
    }

    /// The image scaled by `alpha` about the origin.
    pub fn scaled(mut self, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::InvalidInput(format!("scale must be positive, got {alpha}")));
        }
        self.scale *= alpha;
        Ok(self)
    }

    pub fn with_derivative_mode(mut self, mode: DerivativeMode) -> Self {
        if !self.is_custom() {
            self.mode = mode;
        }
        self
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }
    pub fn intrinsic_dim(&self) -> usize {
        self.n
    }
    pub fn ambient_dim(&self) -> usize {
        self.ambient
    }
    pub fn codim(&self) -> usize {
        self.ambient - self.n
    }
    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }
    pub fn scale(&self) -> f64 {
        self.scale
    }
    pub fn derivative_mode(&self) -> DerivativeMode {
        self.mode
    }
    pub fn is_custom(&self) -> bool {
        matches!(self.kind, ModelKind::Custom(_))
    }

    pub fn name(&self) -> String {
        match &self.kind {
            ModelKind::Sphere { n, p } => format!("sphere({n},{p})"),
            ModelKind::Plane { n, p } => format!("plane({n},{p})"),
            ModelKind::Cylinder { k, n, p } => format!("cylinder({k},{n},{p})"),
            ModelKind::CliffordTorus => "clifford_torus".into(),
            ModelKind::Custom(c) => format!("custom({})", c.name),
        }
    }

    pub fn is_closed(&self) -> bool {
        match &self.kind {
            ModelKind::Custom(c) => c.closed,
            _ => self.factors.iter().all(|f| f.is_compact()),
        }
    }

    /// Catalog flag; for custom charts this is the user's claim and should be
    /// confirmed with `check_parallel_principal_normal`.
    pub fn parallel_principal_normal(&self) -> bool {
        match &self.kind {
            ModelKind::Custom(c) => c.parallel_principal_normal || self.codim() == 1,
            _ => true,
        }
    }

    pub fn minimal_in_sphere(&self) -> bool {
        match &self.kind {
            ModelKind::Sphere { .. } | ModelKind::CliffordTorus => true,
            ModelKind::Custom(c) => c.minimal_in_sphere,
            _ => false,
        }
    }

    pub fn growth_asserted(&self) -> bool {
        match &self.kind {
            ModelKind::Custom(c) => c.growth_asserted,
            _ => true,
        }
    }

    /// Characteristic length used for degeneracy thresholds.
    pub fn length_scale(&self) -> f64 {
        let r = self
            .blocks
            .iter()
            .filter_map(|b| match b {
                Block::Round { radius, .. } => Some(*radius),
                _ => None,
            })
            .fold(1.0, f64::max);
        (r * self.scale).max(self.scale)
    }

    /// Ambient coordinates spanned by line factors, in factor order.
    pub fn line_coords(&self) -> Vec<usize> {
        self.blocks
            .iter()
            .filter_map(|b| match b {
                Block::Line { offset } => Some(*offset),
                _ => None,
            })
            .collect()
    }

    /// The round factor's model for product splitting: drop line factors.
    pub fn compact_part(&self) -> Result<ShrinkerModel> {
        match self.kind {
            ModelKind::Cylinder { k, p, .. } => {
                let m = ShrinkerModel::sphere(k, p)?;
                m.scaled(self.scale)
            }
            _ => Err(Error::InvalidInput(format!("{} is not a product with a line factor", self.name()))),
        }
    }

    /// Analytic position jets (one per ambient coordinate) in all `n`
    /// parameters. `None` for custom charts.
    pub fn position_jets(&self, u: &[f64]) -> Option<Vec<Jet>> {
        if self.is_custom() {
            return None;
        }
        let n = self.n;
        let mut x: Vec<Jet> = (0..self.ambient).map(|_| Jet::constant(0.0, n)).collect();
        let mut off = 0;
        for b in &self.blocks {
            match *b {
                Block::Round { dim, radius, offset } => {
                    let w = unit_sphere_jets(dim, &u[off..off + dim], off, n);
                    for (m, wm) in w.iter().enumerate() {
                        x[offset + m] = wm.scale(radius * self.scale);
                    }
                    off += dim;
                }
                Block::Line { offset } => {
                    x[offset] = Jet::variable(u[off], off, n).scale(self.scale);
                    off += 1;
                }
            }
        }
        Some(x)
    }

    pub fn position(&self, u: &[f64]) -> Vec<f64> {
        match &self.kind {
            ModelKind::Custom(c) => (c.position)(u),
            _ => self.position_jets(u).unwrap().iter().map(|j| j.v).collect(),
        }
    }

    /// Analytic normal frame for catalog models: one jet per ambient
    /// component of each frame vector. Flat constant directions first, then
    /// the mixed round-block normals with the principal direction last.
    pub fn frame_jets(&self, u: &[f64]) -> Option<Vec<Vec<Jet>>> {
        if self.is_custom() {
            return None;
        }
        let n = self.n;
        let zero = || (0..self.ambient).map(|_| Jet::constant(0.0, n)).collect::<Vec<_>>();
        let mut frame = Vec::new();
        for &c in &self.flat_coords {
            let mut e = zero();
            e[c] = Jet::constant(1.0, n);
            frame.push(e);
        }
        let mut normals = Vec::new();
        let mut off = 0;
        for b in &self.blocks {
            match *b {
                Block::Round { dim, offset, .. } => {
                    let w = unit_sphere_jets(dim, &u[off..off + dim], off, n);
                    let mut e = zero();
                    for (m, wm) in w.into_iter().enumerate() {
                        e[offset + m] = wm;
                    }
                    normals.push(e);
                    off += dim;
                }
                Block::Line { .. } => off += 1,
            }
        }
        for row in &self.block_mix {
            let mut e = zero();
            for (coef, nb) in row.iter().zip(&normals) {
                if *coef != 0.0 {
                    for c in 0..self.ambient {
                        e[c] = &e[c] + &nb[c].scale(*coef);
                    }
                }
            }
            frame.push(e);
        }
        Some(frame)
    }

    /// Seed vectors for the generic (numerical) frame construction.
    pub(crate) fn frame_seeds(&self, u: &[f64]) -> Vec<Vec<f64>> {
        match self.frame_jets(u) {
            Some(f) => f.iter().map(|e| e.iter().map(|j| j.v).collect()).collect(),
            None => Vec::new(),
        }
    }

    pub(crate) fn pivots(&self) -> &[usize] {
        &self.pivots
    }

    /// Reference parameter point (interior of every factor).
    pub fn reference_param(&self) -> Vec<f64> {
        self.factors.iter().flat_map(|f| f.reference_point()).collect()
    }

    /// Per-parameter extents, concatenated over factors.
    pub fn param_extents(&self) -> Vec<f64> {
        self.factors.iter().flat_map(|f| f.extents()).collect()
    }
}

fn check_dims(n: usize, p: usize) -> Result<()> {
    if n == 0 || p == 0 {
        return Err(Error::InvalidInput(format!("need n >= 1 and codimension p >= 1, got n={n}, p={p}")));
    }
    Ok(())
}

/// Unit-sphere embedding of `S^dim` in hyperspherical angles; `params` are
/// the block's parameters, which sit at `offset` among `n` total.
pub(crate) fn unit_sphere_jets(dim: usize, params: &[f64], offset: usize, n: usize) -> Vec<Jet> {
    let mut prod = Jet::constant(1.0, n);
    let mut out = Vec::with_capacity(dim + 1);
    for j in 0..dim - 1 {
        let t = Jet::variable(params[j], offset + j, n);
        out.push(&prod * &t.cos());
        prod = &prod * &t.sin();
    }
    let phi = Jet::variable(params[dim - 1], offset + dim - 1, n);
    out.push(&prod * &phi.cos());
    out.push(&prod * &phi.sin());
    out
}

/// Orthogonal matrix whose last row is `r / |r|`.
fn principal_rotation(r: &[f64]) -> Vec<Vec<f64>> {
    let m = r.len();
    if m == 0 {
        return Vec::new();
    }
    let norm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
    let last: Vec<f64> = r.iter().map(|x| x / norm).collect();
    let mut rows: Vec<Vec<f64>> = vec![last.clone()];
    for k in 0..m {
        if rows.len() == m {
            break;
        }
        let mut v = vec![0.0; m];
        v[k] = 1.0;
        for q in &rows {
            let d: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(q).for_each(|(a, b)| *a -= d * b);
        }
        let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nv > 1e-8 {
            rows.push(v.iter().map(|x| x / nv).collect());
        }
    }
    rows.rotate_left(1);
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    fn norm(v: &[f64]) -> f64 {
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    #[test]
    fn catalog_sphere_lies_on_radius_sqrt_n() {
        for n in 1..=3 {
            let m = ShrinkerModel::sphere(n, 2).unwrap();
            let mut u = m.reference_param();
            for k in 0..5 {
                u.iter_mut().for_each(|x| *x += 0.37 * k as f64);
                let x = m.position(&u);
                assert_eq!(x.len(), n + 2);
                assert!((norm(&x) - (n as f64).sqrt()).abs() < 1e-12);
                assert_eq!(x[n + 1], 0.0);
            }
        }
    }

    #[test]
    fn cylinder_layout_puts_lines_after_round_block() {
        let m = ShrinkerModel::cylinder(1, 2, 1).unwrap();
        let x = m.position(&[0.0, 0.7]);
        assert_eq!(m.line_coords(), vec![2]);
        assert!((x[0] - 1.0).abs() < 1e-15 && x[1].abs() < 1e-15 && (x[2] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn clifford_principal_direction_is_last() {
        let m = ShrinkerModel::clifford_torus().unwrap();
        let u = [0.4, 1.9];
        let f = m.frame_seeds(&u);
        let x = m.position(&u);
        let nx = norm(&x);
        let d: f64 = f[1].iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() / nx;
        assert!((d - 1.0).abs() < 1e-14);
        let d0: f64 = f[0].iter().zip(&x).map(|(a, b)| a * b).sum();
        assert!(d0.abs() < 1e-14);
    }

    #[test]
    fn invalid_dimensions_rejected() {
        assert!(ShrinkerModel::sphere(0, 1).is_err());
        assert!(ShrinkerModel::plane(2, 0).is_err());
        assert!(ShrinkerModel::cylinder(2, 2, 1).is_err());
    }
}
