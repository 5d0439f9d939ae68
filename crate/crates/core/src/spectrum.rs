//! Galerkin discretization of the drift Laplacian, the stability operator on
//! normal sections, and the scalar operator `L_nu`, with spectra of the
//! associated quadratic forms in the Gaussian-weighted inner product.
//!
//! Forms (weight `exp(-|x|^2/2)`, at the standard center and scale):
//!
//! - drift: `int <grad u, grad v>`, so `Lcal u = -mu u`
//! - full-L: `I(V, W) = int <nabla V, nabla W> - sigma(V, W) - <V, W>`
//! - Lnu: `int <grad f, grad g> - (|Z|^2 + 1) f g`
//!
//! Unknowns are coefficients in a [`ScalarBasis`] (times each normal frame
//! vector for full-L). The strong form `<phi_a, Op phi_b>` is assembled from
//! basis Hessians alongside the weak form; its asymmetry and its distance to
//! minus the weak form measure discrete self-adjointness.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::basis::{BasisOptions, ScalarBasis};
use crate::error::{Error, Result};
use crate::fields::NormalField;
use crate::jet::Jet;
use crate::linalg::{asymmetry, generalized_sym_eigen, symmetrize};
use crate::models::{check_parallel_principal_normal, GeometryData};
use crate::par;
use crate::quadrature::WeightedGrid;
use crate::variation::Cutoff;

pub const DEFAULT_BAND: f64 = 0.05;
pub const CLUSTER_TOLERANCE: f64 = 1e-6;
/// Mass eigenvalues below this fraction of the largest are dropped.
const MASS_CUTOFF: f64 = 1e-13;
const CHUNK: usize = 32;
const GROUPS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum OperatorKind {
    #[serde(rename = "drift-laplacian")]
    Drift,
    #[serde(rename = "full-L")]
    FullL,
    #[serde(rename = "scalar-Lnu")]
    Lnu,
}

impl OperatorKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "drift" | "drift-laplacian" => Ok(Self::Drift),
            "L" | "full-L" => Ok(Self::FullL),
            "Lnu" | "scalar-Lnu" => Ok(Self::Lnu),
            _ => Err(Error::InvalidInput(format!("unknown operator `{s}` (drift, L, Lnu)"))),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::Drift => "drift-laplacian",
            Self::FullL => "full-L",
            Self::Lnu => "scalar-Lnu",
        }
    }
}

#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    pub kind: OperatorKind,
    pub basis: ScalarBasis,
    /// 1 for scalar kinds, `p` for full-L.
    pub components: usize,
    /// Number of unknowns.
    pub dimension: usize,
    /// Quadratic form `I` in coefficient space.
    pub form: DMatrix<f64>,
    /// Weighted Gram matrix of the trial functions.
    pub mass: DMatrix<f64>,
    /// `S` with `S^T mass S = I` on the kept subspace.
    pub whitening: DMatrix<f64>,
    /// `<phi_a, Op phi_b>_w`; `None` for full-L with a nonzero normal connection.
    pub strong: Option<DMatrix<f64>>,
    /// Relative asymmetry of `strong` before any symmetrization.
    pub asymmetry: Option<f64>,
    /// `max|form + strong| / max|form|`.
    pub weak_strong_gap: Option<f64>,
}

impl DiscreteOperator {
    /// Symmetric matrix of the form in a weighted-orthonormal basis.
    pub fn matrix(&self) -> DMatrix<f64> {
        symmetrize(&(self.whitening.transpose() * &self.form * &self.whitening))
    }

    /// Values and tangent-frame gradients at every node of the function with
    /// the given coefficients.
    pub fn sample(&self, grid: &WeightedGrid, coeffs: &DVector<f64>) -> Sampled {
        let (n, c) = (grid.n(), self.components);
        let per = par::map_range(grid.len(), |q| {
            let g = &grid.geometry[q];
            let jets = self.basis.eval(&grid.nodes[q]);
            let mut vals = vec![0.0; c];
            let mut grads = vec![0.0; n * c];
            for (a, phi) in jets.iter().enumerate() {
                let e = frame_grad(g, phi);
                for al in 0..c {
                    let k = coeffs[a * c + al];
                    if k == 0.0 {
                        continue;
                    }
                    vals[al] += k * phi.v;
                    for i in 0..n {
                        grads[i * c + al] += k * e[i];
                        if self.kind == OperatorKind::FullL {
                            for be in 0..c {
                                grads[i * c + be] += k * phi.v * frame_omega(g, i, al, be);
                            }
                        }
                    }
                }
            }
            (vals, grads)
        });
        let mut s = Sampled { components: c, n, values: Vec::new(), grads: Vec::new() };
        for (v, g) in per {
            s.values.extend(v);
            s.grads.extend(g);
        }
        s
    }

    /// Weighted norm of the projection onto the trial space of the weak
    /// residual of `Op f = rhs`, i.e. of `phi -> I(f, phi) + <rhs, phi>_w`.
    pub fn weak_residual(&self, grid: &WeightedGrid, f: &Sampled, rhs: &[f64]) -> Result<f64> {
        let c = self.components;
        if f.components != c || rhs.len() != f.values.len() || f.values.len() != grid.len() * c {
            return Err(Error::DimensionMismatch { expected: grid.len() * c, got: rhs.len() });
        }
        let r = accumulate_vectors(grid.len(), self.dimension, |range| {
            let mut r = DVector::zeros(self.dimension);
            for q in range {
                let rows = node_rows(grid, &self.basis, self.kind, q, false)?;
                let w = grid.gaussian_weights[q];
                let gf = DVector::from_column_slice(&f.grads[q * grid.n() * c..(q + 1) * grid.n() * c]);
                let fv = DVector::from_column_slice(&f.values[q * c..(q + 1) * c]);
                let rv = DVector::from_column_slice(&rhs[q * c..(q + 1) * c]);
                let zeroth = &rows.zeroth * &fv;
                r += (rows.grads.tr_mul(&gf) - rows.values.tr_mul(&zeroth) + rows.values.tr_mul(&rv)) * w;
            }
            Ok(r)
        })?;
        Ok((self.whitening.transpose() * r).norm())
    }
}

/// Nodal values `values[q * components + alpha]` and tangent-frame
/// gradients `grads[(q * n + i) * components + alpha]`.
#[derive(Debug, Clone)]
pub struct Sampled {
    pub components: usize,
    pub n: usize,
    pub values: Vec<f64>,
    pub grads: Vec<f64>,
}

impl Sampled {
    pub fn from_field(field: &NormalField) -> Self {
        Self { components: field.p, n: field.n, values: field.values.clone(), grads: field.cov_grad.clone() }
    }

    /// Scalar function from a per-node closure returning the value and the
    /// tangent-frame gradient.
    pub fn scalar<F>(grid: &WeightedGrid, f: F) -> Self
    where
        F: Fn(&GeometryData) -> (f64, Vec<f64>) + Sync + Send,
    {
        let per = par::map_range(grid.len(), |q| f(&grid.geometry[q]));
        let mut s = Self { components: 1, n: grid.n(), values: Vec::new(), grads: Vec::new() };
        for (v, g) in per {
            s.values.push(v);
            s.grads.extend(g);
        }
        s
    }

    pub fn weighted_norm(&self, grid: &WeightedGrid) -> f64 {
        let c = self.components;
        par::sum_range(grid.len(), |q| {
            grid.gaussian_weights[q] * self.values[q * c..(q + 1) * c].iter().map(|v| v * v).sum::<f64>()
        })
        .sqrt()
    }
}

fn weighted_norm_values(grid: &WeightedGrid, values: &[f64], c: usize) -> f64 {
    par::sum_range(grid.len(), |q| {
        grid.gaussian_weights[q] * values[q * c..(q + 1) * c].iter().map(|v| v * v).sum::<f64>()
    })
    .sqrt()
}

/// `e_i f` for a scalar jet.
fn frame_grad(g: &GeometryData, f: &Jet) -> Vec<f64> {
    let n = g.n;
    (0..n).map(|i| (0..n).map(|a| g.tangent_coeffs[i * n + a] * f.d[a]).sum()).collect()
}

/// `<nabla^perp_{e_i} e_alpha, e_beta>`.
fn frame_omega(g: &GeometryData, i: usize, alpha: usize, beta: usize) -> f64 {
    let n = g.n;
    (0..n).map(|a| g.tangent_coeffs[i * n + a] * g.omega(a, alpha, beta)).sum()
}

/// `Delta f - <x, grad f>` from the jet and the chart geometry.
fn drift_laplacian(g: &GeometryData, f: &Jet, gamma: &[f64]) -> f64 {
    let n = g.n;
    let mut lap = 0.0;
    let mut drift = 0.0;
    for a in 0..n {
        let xa: f64 = g.position.iter().zip(&g.tangents[a]).map(|(x, t)| x * t).sum();
        for b in 0..n {
            let gi = g.inverse_metric[a * n + b];
            let christ: f64 = (0..n).map(|c| gamma[(c * n + a) * n + b] * f.d[c]).sum();
            lap += gi * (f.hess(a, b) - christ);
            drift += xa * gi * f.d[b];
        }
    }
    lap - drift
}

/// `|Z|^2`, zero where the second fundamental form vanishes.
fn z_squared(g: &GeometryData, q: usize) -> Result<f64> {
    match g.sqnorm_z {
        Some(z) => Ok(z),
        None if g.sqnorm_a <= 1e-20 => Ok(0.0),
        None => Err(Error::VanishingMeanCurvature { nodes: vec![q] }),
    }
}

struct NodeRows {
    /// `components x dofs`.
    values: DMatrix<f64>,
    /// `(n * components) x dofs`, row `i * components + beta`.
    grads: DMatrix<f64>,
    /// Zeroth-order coefficient of the form, `components x components`.
    zeroth: DMatrix<f64>,
    /// `components x dofs` strong operator applied to each trial function.
    strong: Option<DMatrix<f64>>,
}

fn node_rows(
    grid: &WeightedGrid,
    basis: &ScalarBasis,
    kind: OperatorKind,
    q: usize,
    with_strong: bool,
) -> Result<NodeRows> {
    let g = &grid.geometry[q];
    let n = g.n;
    let c = if kind == OperatorKind::FullL { g.p } else { 1 };
    let jets = basis.eval(&grid.nodes[q]);
    let dofs = jets.len() * c;
    let zeroth = match kind {
        OperatorKind::Drift => DMatrix::zeros(1, 1),
        OperatorKind::Lnu => DMatrix::from_element(1, 1, z_squared(g, q)? + 1.0),
        OperatorKind::FullL => DMatrix::from_fn(c, c, |a, b| g.sigma_ab(a, b) + if a == b { 1.0 } else { 0.0 }),
    };
    let mut values = DMatrix::zeros(c, dofs);
    let mut grads = DMatrix::zeros(n * c, dofs);
    let gamma = if with_strong { Some(g.christoffel()) } else { None };
    let mut strong = gamma.as_ref().map(|_| DMatrix::zeros(c, dofs));
    for (a, phi) in jets.iter().enumerate() {
        let e = frame_grad(g, phi);
        let lap = gamma.as_ref().map(|gm| drift_laplacian(g, phi, gm));
        for al in 0..c {
            let col = a * c + al;
            values[(al, col)] = phi.v;
            for i in 0..n {
                grads[(i * c + al, col)] += e[i];
                if kind == OperatorKind::FullL {
                    for be in 0..c {
                        grads[(i * c + be, col)] += phi.v * frame_omega(g, i, al, be);
                    }
                }
            }
            if let (Some(s), Some(l)) = (strong.as_mut(), lap) {
                s[(al, col)] += l;
                for be in 0..c {
                    s[(be, col)] += zeroth[(be, al)] * phi.v;
                }
            }
        }
    }
    Ok(NodeRows { values, grads, zeroth, strong })
}

fn tree_reduce<T, F>(mut items: Vec<T>, add: F) -> Option<T>
where
    F: Fn(T, T) -> T,
{
    while items.len() > 1 {
        let mut next = Vec::with_capacity(items.len().div_ceil(2));
        let mut it = items.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(add(a, b)),
                None => next.push(a),
            }
        }
        items = next;
    }
    items.pop()
}

/// Node ranges in fixed chunks, grouped into a fixed number of sequential
/// groups; the result does not depend on the thread count.
fn group_ranges(len: usize) -> Vec<Vec<std::ops::Range<usize>>> {
    let chunks: Vec<_> = (0..len.div_ceil(CHUNK)).map(|k| k * CHUNK..((k + 1) * CHUNK).min(len)).collect();
    let per = chunks.len().div_ceil(GROUPS).max(1);
    chunks.chunks(per).map(|c| c.to_vec()).collect()
}

fn accumulate_vectors<F>(len: usize, dim: usize, f: F) -> Result<DVector<f64>>
where
    F: Fn(std::ops::Range<usize>) -> Result<DVector<f64>> + Sync + Send,
{
    let groups = group_ranges(len);
    let parts = par::try_map_range(groups.len(), |k| {
        let mut acc = DVector::zeros(dim);
        for r in &groups[k] {
            acc += f(r.clone())?;
        }
        Ok::<_, Error>(acc)
    })?;
    Ok(tree_reduce(parts, |a, b| a + b).unwrap_or_else(|| DVector::zeros(dim)))
}

struct Assembled {
    form: DMatrix<f64>,
    mass: DMatrix<f64>,
    strong: Option<DMatrix<f64>>,
}

fn assemble_range(
    grid: &WeightedGrid,
    basis: &ScalarBasis,
    kind: OperatorKind,
    range: std::ops::Range<usize>,
    with_strong: bool,
) -> Result<Assembled> {
    let c = if kind == OperatorKind::FullL { grid.p() } else { 1 };
    let n = grid.n();
    let rows: Vec<NodeRows> = range.clone().map(|q| node_rows(grid, basis, kind, q, with_strong)).collect::<Result<_>>()?;
    let dofs = basis.len() * c;
    let m = rows.len();
    let mut v = DMatrix::zeros(m * c, dofs);
    let mut cv = DMatrix::zeros(m * c, dofs);
    let mut gr = DMatrix::zeros(m * n * c, dofs);
    let mut sv = with_strong.then(|| DMatrix::zeros(m * c, dofs));
    for (k, (r, q)) in rows.iter().zip(range).enumerate() {
        let sw = grid.gaussian_weights[q].sqrt();
        v.rows_mut(k * c, c).copy_from(&(&r.values * sw));
        cv.rows_mut(k * c, c).copy_from(&(&r.zeroth * &r.values * sw));
        gr.rows_mut(k * n * c, n * c).copy_from(&(&r.grads * sw));
        if let (Some(s), Some(rs)) = (sv.as_mut(), r.strong.as_ref()) {
            s.rows_mut(k * c, c).copy_from(&(rs * sw));
        }
    }
    Ok(Assembled {
        form: gr.tr_mul(&gr) - v.tr_mul(&cv),
        mass: v.tr_mul(&v),
        strong: sv.map(|s| v.tr_mul(&s)),
    })
}

fn max_connection(grid: &WeightedGrid) -> f64 {
    grid.geometry.iter().flat_map(|g| g.connection.iter()).fold(0.0f64, |m, w| m.max(w.abs()))
}

/// Assemble the discrete operator of the given kind on the grid's nodes.
pub fn assemble(grid: &WeightedGrid, kind: OperatorKind, options: BasisOptions) -> Result<DiscreteOperator> {
    let basis = ScalarBasis::new(&grid.model, options)?;
    let components = if kind == OperatorKind::FullL { grid.p() } else { 1 };
    let dimension = basis.len() * components;
    let with_strong = kind != OperatorKind::FullL || max_connection(grid) <= 1e-12;
    if grid.gaussian_weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::NonFiniteValue { index: grid.gaussian_weights.iter().position(|w| !(*w >= 0.0)).unwrap() });
    }
    let groups = group_ranges(grid.len());
    let parts = par::try_map_range(groups.len(), |k| {
        let mut acc: Option<Assembled> = None;
        for r in &groups[k] {
            let a = assemble_range(grid, &basis, kind, r.clone(), with_strong)?;
            acc = Some(match acc {
                None => a,
                Some(b) => add_assembled(b, a),
            });
        }
        Ok::<_, Error>(acc)
    })?;
    let total = tree_reduce(parts.into_iter().flatten().collect(), add_assembled)
        .ok_or_else(|| Error::InvalidInput("empty grid".into()))?;
    let form = symmetrize(&total.form);
    let mass = symmetrize(&total.mass);
    let whitening = crate::linalg::whitening(&mass, MASS_CUTOFF)?;
    let (asym, gap) = match &total.strong {
        Some(s) => {
            let scale = form.amax().max(f64::MIN_POSITIVE);
            (Some(asymmetry(s)), Some((&form + s).amax() / scale))
        }
        None => (None, None),
    };
    Ok(DiscreteOperator {
        kind,
        basis,
        components,
        dimension,
        form,
        mass,
        whitening,
        strong: total.strong,
        asymmetry: asym,
        weak_strong_gap: gap,
    })
}

fn add_assembled(a: Assembled, b: Assembled) -> Assembled {
    Assembled {
        form: a.form + b.form,
        mass: a.mass + b.mass,
        strong: match (a.strong, b.strong) {
            (Some(x), Some(y)) => Some(x + y),
            _ => None,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Classification {
    #[serde(rename = "near(-2)")]
    NearMinusTwo,
    #[serde(rename = "near(-1)")]
    NearMinusOne,
    #[serde(rename = "other")]
    Other,
    #[serde(rename = "nonnegative")]
    Nonnegative,
}

impl Classification {
    pub fn of(mu: f64, band: f64) -> Self {
        if (mu + 2.0).abs() <= band {
            Self::NearMinusTwo
        } else if (mu + 1.0).abs() <= band {
            Self::NearMinusOne
        } else if mu < -band {
            Self::Other
        } else {
            Self::Nonnegative
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::NearMinusTwo => "near(-2)",
            Self::NearMinusOne => "near(-1)",
            Self::Other => "other",
            Self::Nonnegative => "nonnegative",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Cluster {
    pub value: f64,
    pub multiplicity: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectralResult {
    pub kind: OperatorKind,
    pub dimension: usize,
    /// Lowest eigenvalues of the form, ascending.
    pub eigenvalues: Vec<f64>,
    pub classification: Vec<Classification>,
    pub clusters: Vec<Cluster>,
    /// Eigenvalues below `-band`.
    pub negative: Vec<f64>,
    pub band: f64,
    /// Per eigenvalue `|mu - I(c, c) / <c, c>|`.
    pub rayleigh_residuals: Vec<f64>,
    /// `max |C^T M C - 1|` over the returned eigenvectors.
    pub orthonormality_residual: f64,
    pub asymmetry: Option<f64>,
    pub weak_strong_gap: Option<f64>,
    /// Mass-orthonormal coefficient vectors (columns).
    #[serde(skip)]
    pub coefficients: DMatrix<f64>,
}

impl SpectralResult {
    pub fn coefficient(&self, k: usize) -> DVector<f64> {
        self.coefficients.column(k).into_owned()
    }

    /// Eigenfield `k` as a normal section; scalar kinds are placed along the
    /// last normal frame vector.
    pub fn eigenfield(&self, op: &DiscreteOperator, grid: &WeightedGrid, k: usize) -> Result<NormalField> {
        if k >= self.eigenvalues.len() {
            return Err(Error::InvalidInput(format!("eigenfield {k} not computed")));
        }
        let s = op.sample(grid, &self.coefficient(k));
        let (n, p) = (grid.n(), grid.p());
        if op.kind == OperatorKind::FullL {
            return Ok(NormalField { n, p, values: s.values, cov_grad: s.grads });
        }
        let last = p - 1;
        let mut out = NormalField::zeros(grid);
        for q in 0..grid.len() {
            let g = &grid.geometry[q];
            out.values[q * p + last] = s.values[q];
            for i in 0..n {
                out.cov_grad[(q * n + i) * p + last] += s.grads[q * n + i];
                for be in 0..p {
                    out.cov_grad[(q * n + i) * p + be] += s.values[q] * frame_omega(g, i, last, be);
                }
            }
        }
        Ok(out)
    }
}

fn clusters(values: &[f64]) -> Vec<Cluster> {
    let mut out: Vec<(Vec<f64>, f64)> = Vec::new();
    for &v in values {
        match out.last_mut() {
            Some((members, last)) if (v - *last).abs() <= CLUSTER_TOLERANCE * (1.0 + v.abs()) => {
                members.push(v);
                *last = v;
            }
            _ => out.push((vec![v], v)),
        }
    }
    out.into_iter()
        .map(|(m, _)| Cluster { value: m.iter().sum::<f64>() / m.len() as f64, multiplicity: m.len() })
        .collect()
}

/// Lowest `count` eigenvalues of the form relative to the weighted mass.
pub fn spectrum(op: &DiscreteOperator, count: usize, band: f64) -> Result<SpectralResult> {
    if count == 0 {
        return Err(Error::InvalidInput("count must be positive".into()));
    }
    if !(band > 0.0 && band < 0.5) {
        return Err(Error::InvalidInput(format!("band {band} outside (0, 0.5)")));
    }
    let (eig, _) = generalized_sym_eigen(&op.form, &op.mass, MASS_CUTOFF).map_err(|e| match e {
        Error::EigensolverFailure(m) => Error::EigensolverFailure(format!(
            "{m}; form max {:.3e}, mass max {:.3e}, dimension {}",
            op.form.amax(),
            op.mass.amax(),
            op.dimension
        )),
        other => other,
    })?;
    let count = count.min(eig.values.len());
    let eigenvalues = eig.values[..count].to_vec();
    let coefficients = eig.vectors.columns(0, count).into_owned();
    let gram = coefficients.transpose() * &op.mass * &coefficients;
    let ortho = (gram - DMatrix::<f64>::identity(count, count)).amax();
    let rayleigh_residuals = (0..count)
        .map(|k| {
            let c = coefficients.column(k);
            let num = c.dot(&(&op.form * c));
            let den = c.dot(&(&op.mass * c));
            (eigenvalues[k] - num / den).abs()
        })
        .collect();
    let classification: Vec<_> = eigenvalues.iter().map(|&m| Classification::of(m, band)).collect();
    Ok(SpectralResult {
        kind: op.kind,
        dimension: op.dimension,
        negative: eigenvalues.iter().copied().filter(|&m| m < -band).collect(),
        clusters: clusters(&eigenvalues),
        eigenvalues,
        classification,
        band,
        rayleigh_residuals,
        orthonormality_residual: ortho,
        asymmetry: op.asymmetry,
        weak_strong_gap: op.weak_strong_gap,
        coefficients,
    })
}

/// Relative residuals of the analytic eigenfield identities; `None` marks an
/// identity whose field vanishes identically.
#[derive(Debug, Clone, Serialize)]
pub struct EigenfieldReport {
    /// `L H = 2H`.
    pub mean_curvature: Option<f64>,
    pub mean_curvature_vanishes: bool,
    /// `L z^perp = z^perp` for each ambient basis vector `z`.
    pub constant_vectors: Vec<Option<f64>>,
    /// `Lcal x_i = -x_i`.
    pub coordinates: Vec<Option<f64>>,
    /// `Lcal |x|^2 / 2 = n - |x|^2`.
    pub square_norm: f64,
    /// `L_nu <H, nu> = 2 <H, nu>`, on models with parallel principal normal.
    pub lnu_mean_curvature: Option<f64>,
    /// `L_nu <z, nu> = <z, nu>`.
    pub lnu_constant_vectors: Vec<Option<f64>>,
}

impl EigenfieldReport {
    pub fn max_residual(&self) -> f64 {
        let opt = |v: &Option<f64>| v.unwrap_or(0.0);
        [opt(&self.mean_curvature), self.square_norm, opt(&self.lnu_mean_curvature)]
            .into_iter()
            .chain(self.constant_vectors.iter().map(opt))
            .chain(self.coordinates.iter().map(opt))
            .chain(self.lnu_constant_vectors.iter().map(opt))
            .fold(0.0, f64::max)
    }
}

fn unit(dim: usize, k: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    v[k] = 1.0;
    v
}

/// Fields below this weighted norm (relative to `sqrt(int w)`) count as zero.
const ZERO_FIELD: f64 = 1e-10;

fn relative(op: &DiscreteOperator, grid: &WeightedGrid, f: &Sampled, rhs: &[f64], scale: f64) -> Result<Option<f64>> {
    let floor = ZERO_FIELD * grid.total_gaussian().sqrt();
    if scale <= floor {
        return Ok(None);
    }
    Ok(Some(op.weak_residual(grid, f, rhs)? / scale))
}

pub fn verify_eigenfields(grid: &WeightedGrid, options: BasisOptions) -> Result<EigenfieldReport> {
    let (n, p, big) = (grid.n(), grid.p(), grid.ambient());
    let full = assemble(grid, OperatorKind::FullL, options)?;
    let h = NormalField::mean_curvature(grid);
    let hs = Sampled::from_field(&h);
    let hnorm = hs.weighted_norm(grid);
    let rhs: Vec<f64> = h.values.iter().map(|v| 2.0 * v).collect();
    let mean_curvature = relative(&full, grid, &hs, &rhs, hnorm)?;

    let mut constant_vectors = Vec::with_capacity(big);
    for k in 0..big {
        let z = unit(big, k);
        let v = NormalField::from_ambient(grid, |_| z.clone());
        let s = Sampled::from_field(&v);
        let norm = s.weighted_norm(grid);
        constant_vectors.push(relative(&full, grid, &s, &v.values, norm)?);
    }

    let drift = assemble(grid, OperatorKind::Drift, options)?;
    let mut coordinates = Vec::with_capacity(big);
    for k in 0..big {
        let s = Sampled::scalar(grid, |g| (g.position[k], (0..n).map(|i| g.tangent_frame[i][k]).collect()));
        let rhs: Vec<f64> = s.values.iter().map(|v| -v).collect();
        let norm = s.weighted_norm(grid);
        coordinates.push(relative(&drift, grid, &s, &rhs, norm)?);
    }
    let sq = Sampled::scalar(grid, |g| {
        let x = &g.position;
        let r2: f64 = x.iter().map(|v| v * v).sum();
        (0.5 * r2, (0..n).map(|i| x.iter().zip(&g.tangent_frame[i]).map(|(a, b)| a * b).sum()).collect())
    });
    let rhs: Vec<f64> = grid
        .geometry
        .iter()
        .map(|g| n as f64 - g.position.iter().map(|v| v * v).sum::<f64>())
        .collect();
    let scale = weighted_norm_values(grid, &rhs, 1).max(sq.weighted_norm(grid));
    let square_norm = drift.weak_residual(grid, &sq, &rhs)? / scale;

    let parallel = !h.values.iter().all(|v| *v == 0.0)
        && check_parallel_principal_normal(grid).map(|r| r.parallel).unwrap_or(false);
    let (mut lnu_mean_curvature, mut lnu_constant_vectors) = (None, Vec::new());
    if parallel {
        let lnu = assemble(grid, OperatorKind::Lnu, options)?;
        let last = p - 1;
        let f = Sampled::scalar(grid, |_| (0.0, vec![0.0; n]));
        let mut f = f;
        for q in 0..grid.len() {
            let g = &grid.geometry[q];
            f.values[q] = h.at(q)[last];
            for i in 0..n {
                let conn: f64 = (0..p).map(|b| h.at(q)[b] * frame_omega(g, i, b, last)).sum();
                f.grads[q * n + i] = h.grad(q, i, last) - conn;
            }
        }
        let rhs: Vec<f64> = f.values.iter().map(|v| 2.0 * v).collect();
        let norm = f.weighted_norm(grid);
        lnu_mean_curvature = relative(&lnu, grid, &f, &rhs, norm)?;
        for k in 0..big {
            let s = Sampled::scalar(grid, |g| {
                let e = &g.normal_frame[last];
                let val = e[k];
                let grad = (0..n)
                    .map(|i| {
                        let shape: f64 = (0..n).map(|j| g.h(last, i, j) * g.tangent_frame[j][k]).sum();
                        let conn: f64 = (0..p).map(|b| frame_omega(g, i, last, b) * g.normal_frame[b][k]).sum();
                        -shape + conn
                    })
                    .collect();
                (val, grad)
            });
            let norm = s.weighted_norm(grid);
            let rhs = s.values.clone();
            lnu_constant_vectors.push(relative(&lnu, grid, &s, &rhs, norm)?);
        }
    }

    Ok(EigenfieldReport {
        mean_curvature_vanishes: mean_curvature.is_none(),
        mean_curvature,
        constant_vectors,
        coordinates,
        square_norm,
        lnu_mean_curvature,
        lnu_constant_vectors,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectralBottom {
    /// `(j, quotient)` for the cutoff trial functions.
    pub rayleigh: Vec<(f64, f64)>,
    pub rayleigh_min: f64,
    /// Lowest eigenvalue of the discretized `L_nu` form.
    pub eigen_min: f64,
    /// The smaller of the two; an upper bound for the bottom of the spectrum
    /// up to discretization error.
    pub upper_bound: f64,
}

/// Bottom of the `L_nu` spectrum: Rayleigh quotients of the cutoffs
/// `phi_j` (or the constant on compact models) and the Galerkin minimum.
pub fn spectral_bottom(grid: &WeightedGrid, options: BasisOptions, radii: &[f64]) -> Result<SpectralBottom> {
    let n = grid.n();
    let lines = grid.model.line_coords();
    let trials: Vec<Option<Cutoff>> = if lines.is_empty() {
        vec![None]
    } else {
        radii.iter().map(|&j| Some(Cutoff::ball(j, lines.clone()))).collect()
    };
    let mut rayleigh = Vec::with_capacity(trials.len());
    for t in &trials {
        let parts = par::try_map_range(grid.len(), |q| {
            let g = &grid.geometry[q];
            let (phi, grad) = match t {
                Some(c) => c.eval(&g.position),
                None => (1.0, vec![0.0; g.ambient]),
            };
            let gt: f64 =
                (0..n).map(|i| grad.iter().zip(&g.tangent_frame[i]).map(|(a, b)| a * b).sum::<f64>().powi(2)).sum();
            let w = grid.gaussian_weights[q];
            Ok::<_, Error>((w * (gt - (z_squared(g, q)? + 1.0) * phi * phi), w * phi * phi))
        })?;
        let num = par::tree_sum(&parts.iter().map(|p| p.0).collect::<Vec<_>>());
        let den = par::tree_sum(&parts.iter().map(|p| p.1).collect::<Vec<_>>());
        rayleigh.push((t.as_ref().map(|c| c.inner).unwrap_or(f64::INFINITY), num / den));
    }
    let rayleigh_min = rayleigh.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    let op = assemble(grid, OperatorKind::Lnu, options)?;
    let eigen_min = spectrum(&op, 1, DEFAULT_BAND)?.eigenvalues[0];
    Ok(SpectralBottom { rayleigh, rayleigh_min, eigen_min, upper_bound: rayleigh_min.min(eigen_min) })
}
