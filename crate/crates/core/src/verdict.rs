//! F-stability verdicts and destabilizing certificates.
//!
//! For a fixed normal field `V` the second variation is a concave quadratic
//! in `(h, y)`:
//!
//! `F''(h, y) = c0 + k [ -2 h^2 int|H|^2 - 4 h int<H,V> + 2 <y, int V> - y^T G y ]`
//!
//! with `k = (2 pi)^(-n/2)`, `c0 = F''(V; 0, 0)` and `G = int P_N` the
//! integrated normal projection. Its maximum is available in closed form
//! (pseudo-inverse on the `y` block), which is what every certificate
//! reports; certificates are then re-checked through the variation engine
//! at the maximizer and at random perturbations of it.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::basis::BasisOptions;
use crate::error::{Error, Result};
use crate::fields::NormalField;
use crate::linalg::{psd_pinv, sym_eigen};
use crate::models::{check_minimal_in_sphere, ModelKind, ShrinkerModel};
use crate::par;
use crate::quadrature::{build_grid, Resolution, WeightedGrid};
use crate::spectrum::{assemble, spectrum, Classification, OperatorKind, SpectralResult};
use crate::variation::{random_field, scalar_field_times_last, second_variation, Cutoff, NormalVariation};

/// Reduced-form eigenvalues below `-REDUCED_TOLERANCE` are destabilizing.
pub const REDUCED_TOLERANCE: f64 = 1e-6;
pub const VALIDATION_SAMPLES: usize = 20;

/// How many points of the `(h, y)` plane a certificate is re-checked at and
/// the seed of the perturbations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Validation {
    pub samples: usize,
    pub seed: u64,
}

impl Default for Validation {
    fn default() -> Self {
        Self { samples: VALIDATION_SAMPLES, seed: 0 }
    }
}

impl Validation {
    fn salted(self, salt: u64) -> Self {
        Self { seed: self.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(salt), ..self }
    }
}
const PINV_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Status {
    #[serde(rename = "stable-candidate")]
    StableCandidate,
    #[serde(rename = "unstable")]
    Unstable,
    #[serde(rename = "inconclusive")]
    Inconclusive,
}

impl Status {
    pub fn label(&self) -> &'static str {
        match self {
            Self::StableCandidate => "stable-candidate",
            Self::Unstable => "unstable",
            Self::Inconclusive => "inconclusive",
        }
    }
}

/// Closed-form maximum of `F''` over `(h, y)` for a fixed field.
#[derive(Debug, Clone, Serialize)]
pub struct InnerMax {
    pub value: f64,
    pub h: f64,
    pub y: Vec<f64>,
    /// `false` when the quadratic is unbounded above (a linear term along a
    /// null direction of the quadratic part).
    pub bounded: bool,
    /// `F''(V; 0, 0)`.
    pub base: f64,
}

struct Moments {
    /// `int |H|^2 w`.
    hh: f64,
    /// `int <H, V> w`.
    hv: f64,
    /// `int V w` (ambient).
    yv: DVector<f64>,
    /// `int P_N w`.
    g: DMatrix<f64>,
}

fn moments(grid: &WeightedGrid, v: &NormalField) -> Moments {
    let big = grid.ambient();
    let parts = par::map_range(grid.len(), |q| {
        let geo = &grid.geometry[q];
        let w = grid.gaussian_weights[q];
        let va = v.at(q);
        let hh = w * geo.sqnorm_h();
        let hv = w * geo.mean_curvature.iter().zip(va).map(|(a, b)| a * b).sum::<f64>();
        let amb = v.ambient_at(geo, q);
        (hh, hv, amb.iter().map(|x| w * x).collect::<Vec<_>>(), w)
    });
    let hh = par::tree_sum(&parts.iter().map(|p| p.0).collect::<Vec<_>>());
    let hv = par::tree_sum(&parts.iter().map(|p| p.1).collect::<Vec<_>>());
    let yv = DVector::from_fn(big, |i, _| par::tree_sum(&parts.iter().map(|p| p.2[i]).collect::<Vec<_>>()));
    Moments { hh, hv, yv, g: normal_gram(grid) }
}

fn normal_gram(grid: &WeightedGrid) -> DMatrix<f64> {
    let big = grid.ambient();
    let mut g = DMatrix::zeros(big, big);
    for a in 0..big {
        for b in a..big {
            let v = par::sum_range(grid.len(), |q| {
                let geo = &grid.geometry[q];
                grid.gaussian_weights[q] * geo.normal_frame.iter().map(|e| e[a] * e[b]).sum::<f64>()
            });
            g[(a, b)] = v;
            g[(b, a)] = v;
        }
    }
    g
}

fn kappa(n: usize) -> f64 {
    (2.0 * std::f64::consts::PI).powf(-(n as f64) / 2.0)
}

/// Maximize `F''(V; h, y)` over `(h, y)`.
pub fn inner_max(grid: &WeightedGrid, v: &NormalField) -> Result<InnerMax> {
    let base = second_variation(grid, &NormalVariation::pure(v.clone(), grid.ambient()))?;
    let m = moments(grid, v);
    let k = kappa(grid.n());
    let scale = grid.total_gaussian();
    let mut bounded = true;
    let (h, hgain) = if m.hh > PINV_TOLERANCE * scale {
        (-m.hv / m.hh, 2.0 * m.hv * m.hv / m.hh)
    } else {
        if m.hv.abs() > 1e-9 * scale {
            bounded = false;
        }
        (0.0, 0.0)
    };
    let ginv = psd_pinv(&m.g, PINV_TOLERANCE)?;
    let y = &ginv * &m.yv;
    let miss = (&m.g * &y - &m.yv).norm();
    if miss > 1e-8 * (1.0 + m.yv.norm()) {
        bounded = false;
    }
    let ygain = m.yv.dot(&y);
    let value = if bounded { base + k * (hgain + ygain) } else { f64::INFINITY };
    Ok(InnerMax { value, h, y: y.iter().copied().collect(), bounded, base })
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Construction {
    Eigenfield { eigenvalues: Vec<f64> },
    CutoffCoordinate { j: f64 },
    ConstantVector { z: Vec<f64> },
}

#[derive(Debug, Clone, Serialize)]
pub struct Certificate {
    pub construction: Construction,
    /// `|<V, H>_w| / (|V|_w |H|_w)`.
    pub ortho_h: f64,
    /// Max over ambient basis vectors `y` of `|<V, y^perp>_w| / (|V|_w |y^perp|_w)`.
    pub ortho_y: f64,
    pub worst_case_fpp: f64,
    pub maximizer_h: f64,
    pub maximizer_y: Vec<f64>,
    /// Variation-engine values at the maximizer and random perturbations.
    pub validation: Vec<f64>,
    /// `|engine(maximizer) - worst_case_fpp|`.
    pub maximizer_gap: f64,
    pub validates: bool,
    #[serde(skip)]
    pub field: NormalField,
}

fn weighted_inner(grid: &WeightedGrid, a: &NormalField, b: &NormalField) -> f64 {
    par::sum_range(grid.len(), |q| {
        grid.gaussian_weights[q] * a.at(q).iter().zip(b.at(q)).map(|(x, y)| x * y).sum::<f64>()
    })
}

fn orthogonality(grid: &WeightedGrid, v: &NormalField) -> (f64, f64) {
    let vn = weighted_inner(grid, v, v).sqrt();
    let h = NormalField::from_frame_components(grid, |_, g| (g.mean_curvature.clone(), vec![0.0; g.n * g.p]));
    let hn = weighted_inner(grid, &h, &h).sqrt();
    let oh = if hn > 0.0 && vn > 0.0 { weighted_inner(grid, v, &h).abs() / (vn * hn) } else { 0.0 };
    let big = grid.ambient();
    let mut oy: f64 = 0.0;
    for k in 0..big {
        let z = NormalField::from_frame_components(grid, |_, g| {
            (g.normal_frame.iter().map(|e| e[k]).collect(), vec![0.0; g.n * g.p])
        });
        let zn = weighted_inner(grid, &z, &z).sqrt();
        if zn > 1e-12 * grid.total_gaussian().sqrt() && vn > 0.0 {
            oy = oy.max(weighted_inner(grid, v, &z).abs() / (vn * zn));
        }
    }
    (oh, oy)
}

/// Build a certificate for `v`: closed-form worst case plus validation
/// through the variation engine.
pub fn certify(
    grid: &WeightedGrid,
    v: NormalField,
    construction: Construction,
    validation: Validation,
) -> Result<Certificate> {
    let im = inner_max(grid, &v)?;
    let (ortho_h, ortho_y) = orthogonality(grid, &v);
    let mut rng = ChaCha8Rng::seed_from_u64(validation.seed);
    let mut samples = vec![(im.h, im.y.clone())];
    for _ in 1..validation.samples.max(1) {
        let h = im.h + 0.5 * rng.sample::<f64, _>(StandardNormal);
        let y = im.y.iter().map(|c| c + 0.5 * rng.sample::<f64, _>(StandardNormal)).collect();
        samples.push((h, y));
    }
    let validation = par::try_map_range(samples.len(), |s| {
        let (h, y) = &samples[s];
        second_variation(grid, &NormalVariation::new(v.clone(), y.clone(), *h))
    })?;
    let maximizer_gap = (validation[0] - im.value).abs();
    let validates =
        im.bounded && im.value < 0.0 && validation.iter().all(|x| *x < 0.0 && *x <= validation[0] + 1e-10);
    Ok(Certificate {
        construction,
        ortho_h,
        ortho_y,
        worst_case_fpp: im.value,
        maximizer_h: im.h,
        maximizer_y: im.y,
        validation,
        maximizer_gap,
        validates,
        field: v,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct InnerLog {
    pub label: String,
    pub max_fpp: f64,
    pub h: f64,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct NegativeEigenvalue {
    pub value: f64,
    pub classification: Classification,
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityVerdict {
    pub status: Status,
    pub negative_eigenvalues: Vec<NegativeEigenvalue>,
    /// Lowest eigenvalue of the `(h, y)`-maximized form on the negative
    /// eigenspace, in units of `(2 pi)^(-n/2)`.
    pub reduced_form_min: Option<f64>,
    pub certificate: Option<Certificate>,
    pub inner_minimization_log: Vec<InnerLog>,
    /// Other routes consulted, with their status.
    pub routes: Vec<RouteSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RouteSummary {
    pub route: String,
    pub status: Status,
    pub worst_case_fpp: Option<f64>,
}

fn inconclusive_check(values: &[f64], band: f64) -> Result<()> {
    for &mu in values {
        if mu >= -band {
            continue;
        }
        let d = (mu + 2.0).abs().min((mu + 1.0).abs());
        if d > band && d <= 2.0 * band {
            return Err(Error::InconclusiveResolution { eigenvalue: mu });
        }
    }
    Ok(())
}

/// Verdict for a closed shrinker from its full-L spectrum. All eigenvalues
/// below `-band` must be present in `spectral`.
pub fn verdict_closed(
    grid: &WeightedGrid,
    op: &crate::spectrum::DiscreteOperator,
    spectral: &SpectralResult,
    validation: Validation,
) -> Result<StabilityVerdict> {
    if !grid.model.is_closed() {
        return Err(Error::InvalidInput(format!("{} is not closed", grid.model.name())));
    }
    if spectral.kind != OperatorKind::FullL {
        return Err(Error::InvalidInput("closed verdicts need the full-L spectrum".into()));
    }
    let band = spectral.band;
    if spectral.eigenvalues.last().is_some_and(|m| *m < -band) {
        return Err(Error::InvalidInput("spectrum truncated inside the negative range".into()));
    }
    inconclusive_check(&spectral.eigenvalues, band)?;
    let neg: Vec<usize> = (0..spectral.eigenvalues.len()).filter(|&k| spectral.eigenvalues[k] < -band).collect();
    let negative_eigenvalues = neg
        .iter()
        .map(|&k| NegativeEigenvalue { value: spectral.eigenvalues[k], classification: spectral.classification[k] })
        .collect();
    let fields: Vec<NormalField> = neg.iter().map(|&k| spectral.eigenfield(op, grid, k)).collect::<Result<_>>()?;
    let mut log = Vec::new();
    let mut reduced_min = None;
    let mut certificate = None;
    if !fields.is_empty() {
        let kq = fields.len();
        let moms: Vec<Moments> = fields.iter().map(|f| moments(grid, f)).collect();
        let hh = moms[0].hh;
        let ginv = psd_pinv(&moms[0].g, PINV_TOLERANCE)?;
        let mut q = DMatrix::zeros(kq, kq);
        for a in 0..kq {
            for b in 0..kq {
                let mut v = if hh > 0.0 { 2.0 * moms[a].hv * moms[b].hv / hh } else { 0.0 };
                v += moms[a].yv.dot(&(&ginv * &moms[b].yv));
                if a == b {
                    v += spectral.eigenvalues[neg[a]];
                }
                q[(a, b)] = v;
            }
        }
        let eig = sym_eigen(&q)?;
        reduced_min = Some(eig.values[0]);
        for (a, f) in fields.iter().enumerate() {
            let im = inner_max(grid, f)?;
            log.push(InnerLog {
                label: format!("eigenfield {} (mu = {:.6})", neg[a], spectral.eigenvalues[neg[a]]),
                max_fpp: im.value,
                h: im.h,
                y: im.y,
            });
        }
        if eig.values[0] < -REDUCED_TOLERANCE {
            let c = eig.vectors.column(0);
            let mut v = NormalField::zeros(grid);
            for (a, f) in fields.iter().enumerate() {
                v = v.add_scaled(c[a], f);
            }
            let ev = neg.iter().enumerate().filter(|(a, _)| c[*a].abs() > 1e-6).map(|(_, &k)| spectral.eigenvalues[k]);
            certificate = Some(certify(grid, v, Construction::Eigenfield { eigenvalues: ev.collect() }, validation.salted(7))?);
        }
    }
    let status = match &certificate {
        Some(c) if c.validates => Status::Unstable,
        Some(_) => Status::Inconclusive,
        None => Status::StableCandidate,
    };
    Ok(StabilityVerdict {
        status,
        negative_eigenvalues,
        reduced_form_min: reduced_min,
        certificate,
        inner_minimization_log: log,
        routes: Vec::new(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DemoReport {
    pub n: usize,
    pub p: usize,
    pub seed: u64,
    /// `F''` at the explicit `(h, y)` for each trial.
    pub values: Vec<f64>,
    pub min: f64,
}

/// Random variations of `S^n(sqrt n)` in `R^{n+p}` evaluated at the explicit
/// choice `h = -a / sqrt(n)`, sphere part of `y` equal to `z`, flat
/// components of `y` equal to the means of the flat components of `V`,
/// where `<V, nu> = a + <z, nu> + f_0`.
pub fn sphere_stability_demo(n: usize, p: usize, trials: usize, seed: u64, resolution: usize) -> Result<DemoReport> {
    let model = ShrinkerModel::sphere(n, p)?;
    let grid = build_grid(&model, Resolution::uniform(resolution), 10.0)?;
    let big = grid.ambient();
    let rn = (n as f64).sqrt();
    let sphere_coords: Vec<usize> = (0..=n).collect();
    let total = grid.total_gaussian();
    let mut second_moment = vec![0.0; big];
    for &i in &sphere_coords {
        second_moment[i] =
            par::sum_range(grid.len(), |q| grid.gaussian_weights[q] * grid.geometry[q].position[i].powi(2));
    }
    let mut values = Vec::with_capacity(trials);
    for t in 0..trials {
        let v = random_field(&grid, seed.wrapping_mul(1_000_003).wrapping_add(t as u64));
        // f = <V, nu> with nu = H / |H| = -x / sqrt(n)
        let f: Vec<f64> = (0..grid.len())
            .map(|q| {
                let g = &grid.geometry[q];
                let amb = v.ambient_at(g, q);
                -amb.iter().zip(&g.position).map(|(a, x)| a * x).sum::<f64>() / rn
            })
            .collect();
        let a = par::sum_range(grid.len(), |q| grid.gaussian_weights[q] * f[q]) / total;
        let mut y = vec![0.0; big];
        for &i in &sphere_coords {
            let c = par::sum_range(grid.len(), |q| grid.gaussian_weights[q] * f[q] * grid.geometry[q].position[i])
                / second_moment[i];
            y[i] = -rn * c;
        }
        for al in 0..p - 1 {
            let mean = par::sum_range(grid.len(), |q| grid.gaussian_weights[q] * v.at(q)[al]) / total;
            let e = &grid.geometry[0].normal_frame[al];
            for (yi, ei) in y.iter_mut().zip(e) {
                *yi += mean * ei;
            }
        }
        let h = -a / rn;
        values.push(second_variation(&grid, &NormalVariation::new(v, y, h))?);
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(DemoReport { n, p, seed, values, min })
}

#[derive(Debug, Clone, Serialize)]
pub struct ConstantVectorEntry {
    pub z: Vec<f64>,
    pub max_fpp: f64,
    pub h: f64,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConstantVectorReport {
    pub entries: Vec<ConstantVectorEntry>,
    pub worst: f64,
    pub witness: Vec<f64>,
}

/// `V = pi_{N_x M}(z)`: the part of `z^perp` orthogonal to `x`.
pub fn sphere_normal_projection(grid: &WeightedGrid, z: &[f64]) -> NormalField {
    let z = z.to_vec();
    NormalField::from_ambient(grid, move |x| {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        let zx: f64 = z.iter().zip(x).map(|(a, b)| a * b).sum();
        z.iter().zip(x).map(|(a, b)| a - zx * b / r2).collect()
    })
}

/// Constant-vector route for shrinkers that are minimal in `S(sqrt n)`.
pub fn constant_vector_instability(grid: &WeightedGrid, z_basis: &[Vec<f64>]) -> Result<ConstantVectorReport> {
    check_minimal_in_sphere(grid, 1e-8)?;
    if z_basis.is_empty() {
        return Err(Error::InvalidInput("empty z basis".into()));
    }
    let mut entries = Vec::with_capacity(z_basis.len());
    for z in z_basis {
        if z.len() != grid.ambient() {
            return Err(Error::DimensionMismatch { expected: grid.ambient(), got: z.len() });
        }
        let v = sphere_normal_projection(grid, z);
        let im = inner_max(grid, &v)?;
        entries.push(ConstantVectorEntry { z: z.clone(), max_fpp: im.value, h: im.h, y: im.y });
    }
    let best = entries.iter().min_by(|a, b| a.max_fpp.total_cmp(&b.max_fpp)).expect("nonempty");
    Ok(ConstantVectorReport { worst: best.max_fpp, witness: best.z.clone(), entries })
}

pub fn standard_basis(dim: usize) -> Vec<Vec<f64>> {
    (0..dim).map(|k| (0..dim).map(|i| if i == k { 1.0 } else { 0.0 }).collect()).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct CylinderEntry {
    pub j: f64,
    pub max_fpp: f64,
    pub h: f64,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CylinderReport {
    pub entries: Vec<CylinderEntry>,
    /// `-1/2 (2 pi)^(-n/2) int x_1^2 w`.
    pub bound: f64,
    /// `-(2 pi)^(-n/2) int x_1^2 w`, the value for the uncut field.
    pub limit: f64,
}

/// `phi_j x_1 e_last` on a cylinder grid, `x_1` the first line coordinate.
pub fn cutoff_coordinate_field(grid: &WeightedGrid, j: f64) -> Result<NormalField> {
    let lines = grid.model.line_coords();
    let c = *lines.first().ok_or_else(|| Error::InvalidInput("model has no line factor".into()))?;
    if j + 1.0 > grid.truncation {
        return Err(Error::TruncationTooSmall { needed: j + 1.0, truncation: grid.truncation });
    }
    let v = scalar_field_times_last(grid, move |x| {
        let mut g = vec![0.0; x.len()];
        g[c] = 1.0;
        (x[c], g)
    });
    Ok(Cutoff::ball(j, lines).apply(grid, &v))
}

pub fn cylinder_instability(grid: &WeightedGrid, j_list: &[f64]) -> Result<CylinderReport> {
    if !matches!(grid.model.kind(), ModelKind::Cylinder { .. }) {
        return Err(Error::InvalidInput(format!("{} is not a cylinder", grid.model.name())));
    }
    let c = grid.model.line_coords()[0];
    let x2 = par::sum_range(grid.len(), |q| grid.gaussian_weights[q] * grid.geometry[q].position[c].powi(2));
    let k = kappa(grid.n());
    let mut entries = Vec::with_capacity(j_list.len());
    for &j in j_list {
        let v = cutoff_coordinate_field(grid, j)?;
        let im = inner_max(grid, &v)?;
        entries.push(CylinderEntry { j, max_fpp: im.value, h: im.h, y: im.y });
    }
    Ok(CylinderReport { entries, bound: -0.5 * k * x2, limit: -k * x2 })
}

#[derive(Debug, Clone, Serialize)]
pub struct ExtraEigenvalueReport {
    pub negatives: Vec<NegativeEigenvalue>,
    /// Negative eigenvalues outside both bands.
    pub extra: Vec<f64>,
    pub certificate: Option<Certificate>,
}

/// Scan the `L_nu` spectrum for negative eigenvalues other than `-2, -1`.
pub fn extra_eigenvalue_check(
    grid: &WeightedGrid,
    op: &crate::spectrum::DiscreteOperator,
    spectral: &SpectralResult,
    validation: Validation,
) -> Result<ExtraEigenvalueReport> {
    if spectral.kind != OperatorKind::Lnu {
        return Err(Error::InvalidInput("expects the scalar L_nu spectrum".into()));
    }
    let band = spectral.band;
    let mut negatives = Vec::new();
    let mut extra = Vec::new();
    let mut first_extra = None;
    for (k, (&mu, &c)) in spectral.eigenvalues.iter().zip(&spectral.classification).enumerate() {
        if mu < -band {
            negatives.push(NegativeEigenvalue { value: mu, classification: c });
            if c == Classification::Other {
                extra.push(mu);
                first_extra.get_or_insert(k);
            }
        }
    }
    let certificate = match first_extra {
        Some(k) => {
            let v = spectral.eigenfield(op, grid, k)?;
            Some(certify(grid, v, Construction::Eigenfield { eigenvalues: vec![spectral.eigenvalues[k]] }, validation.salted(11))?)
        }
        None => None,
    };
    Ok(ExtraEigenvalueReport { negatives, extra, certificate })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct StabilityOptions {
    pub count: usize,
    pub band: f64,
    pub basis: BasisOptions,
    pub cutoff_j: f64,
    pub validation: Validation,
}

impl Default for StabilityOptions {
    fn default() -> Self {
        Self { count: 24, band: crate::spectrum::DEFAULT_BAND, basis: BasisOptions::default(), cutoff_j: 4.0, validation: Validation::default() }
    }
}

fn full_negative_spectrum(
    grid: &WeightedGrid,
    kind: OperatorKind,
    opts: &StabilityOptions,
) -> Result<(crate::spectrum::DiscreteOperator, SpectralResult)> {
    let op = assemble(grid, kind, opts.basis)?;
    let mut count = opts.count.max(1);
    loop {
        let s = spectrum(&op, count, opts.band)?;
        let done = s.eigenvalues.len() < count || s.eigenvalues.last().is_some_and(|m| *m >= -opts.band);
        if done {
            return Ok((op, s));
        }
        count *= 2;
    }
}

/// Full stability assessment: the eigenvalue route for closed models, the
/// constant-vector route when the model is minimal in a sphere, the cutoff
/// route for cylinders and the `L_nu` scan for other noncompact models.
pub fn assess(grid: &WeightedGrid, opts: &StabilityOptions) -> Result<StabilityVerdict> {
    let model = &grid.model;
    if model.is_closed() {
        let (op, s) = full_negative_spectrum(grid, OperatorKind::FullL, opts)?;
        let mut verdict = verdict_closed(grid, &op, &s, opts.validation)?;
        verdict.routes.push(RouteSummary {
            route: "eigenfield".into(),
            status: verdict.status,
            worst_case_fpp: verdict.certificate.as_ref().map(|c| c.worst_case_fpp),
        });
        let in_sphere = model.minimal_in_sphere() || check_minimal_in_sphere(grid, 1e-8).is_ok();
        if in_sphere {
            let big = grid.ambient();
            let rep = constant_vector_instability(grid, &standard_basis(big))?;
            let cert = if rep.worst < -REDUCED_TOLERANCE {
                let v = sphere_normal_projection(grid, &rep.witness);
                Some(certify(grid, v, Construction::ConstantVector { z: rep.witness.clone() }, opts.validation.salted(13))?)
            } else {
                None
            };
            let st = match &cert {
                Some(c) if c.validates => Status::Unstable,
                Some(_) => Status::Inconclusive,
                None => Status::StableCandidate,
            };
            verdict.routes.push(RouteSummary { route: "constant-vector".into(), status: st, worst_case_fpp: Some(rep.worst) });
            for e in &rep.entries {
                verdict.inner_minimization_log.push(InnerLog {
                    label: format!("constant vector {:?}", e.z),
                    max_fpp: e.max_fpp,
                    h: e.h,
                    y: e.y.clone(),
                });
            }
            if let Some(c) = cert.filter(|c| c.validates) {
                verdict.certificate = Some(c);
                verdict.status = Status::Unstable;
            }
        }
        return Ok(verdict);
    }
    let (op, s) = full_negative_spectrum(grid, OperatorKind::Lnu, opts)?;
    let extra = extra_eigenvalue_check(grid, &op, &s, opts.validation)?;
    let mut verdict = StabilityVerdict {
        status: Status::StableCandidate,
        negative_eigenvalues: extra.negatives.clone(),
        reduced_form_min: None,
        certificate: None,
        inner_minimization_log: Vec::new(),
        routes: vec![RouteSummary {
            route: "extra-eigenvalue".into(),
            status: if extra.certificate.as_ref().is_some_and(|c| c.validates) { Status::Unstable } else { Status::StableCandidate },
            worst_case_fpp: extra.certificate.as_ref().map(|c| c.worst_case_fpp),
        }],
    };
    if matches!(model.kind(), ModelKind::Cylinder { .. }) {
        let v = cutoff_coordinate_field(grid, opts.cutoff_j)?;
        let cert = certify(grid, v, Construction::CutoffCoordinate { j: opts.cutoff_j }, opts.validation.salted(17))?;
        verdict.inner_minimization_log.push(InnerLog {
            label: format!("cutoff coordinate j = {}", opts.cutoff_j),
            max_fpp: cert.worst_case_fpp,
            h: cert.maximizer_h,
            y: cert.maximizer_y.clone(),
        });
        verdict.routes.push(RouteSummary {
            route: "cutoff-coordinate".into(),
            status: if cert.validates { Status::Unstable } else { Status::Inconclusive },
            worst_case_fpp: Some(cert.worst_case_fpp),
        });
        if cert.validates {
            verdict.status = Status::Unstable;
            verdict.certificate = Some(cert);
        } else {
            verdict.status = Status::Inconclusive;
        }
    } else if let Some(c) = extra.certificate {
        verdict.status = if c.validates { Status::Unstable } else { Status::Inconclusive };
        verdict.certificate = Some(c);
    }
    Ok(verdict)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_is_stable_candidate() {
        let m = ShrinkerModel::sphere(2, 1).unwrap();
        let g = build_grid(&m, Resolution::uniform(24), 10.0).unwrap();
        let v = assess(&g, &StabilityOptions::default()).unwrap();
        assert_eq!(v.status, Status::StableCandidate, "{v:?}");
        assert_eq!(v.negative_eigenvalues.len(), 4);
        assert!(v.reduced_form_min.unwrap().abs() < 1e-6);
    }

    #[test]
    fn clifford_torus_is_unstable() {
        let m = ShrinkerModel::clifford_torus().unwrap();
        let g = build_grid(&m, Resolution::uniform(24), 10.0).unwrap();
        let v = assess(&g, &StabilityOptions::default()).unwrap();
        assert_eq!(v.status, Status::Unstable);
        let c = v.certificate.unwrap();
        assert!(matches!(c.construction, Construction::ConstantVector { .. }));
        assert!(c.worst_case_fpp < -1e-3 && c.validates);
        assert!(c.maximizer_gap < 1e-8, "{}", c.maximizer_gap);
        assert!(v.routes.iter().all(|r| r.status == Status::Unstable), "{:?}", v.routes);
    }

    #[test]
    fn cylinder_cutoff_route() {
        let m = ShrinkerModel::cylinder(1, 2, 1).unwrap();
        let g = build_grid(&m, Resolution::new(32, 64), 10.0).unwrap();
        let r = cylinder_instability(&g, &[2.0, 4.0, 6.0]).unwrap();
        let lim = -(-0.5f64).exp() * (2.0 * std::f64::consts::PI).sqrt();
        assert!((r.limit - lim).abs() < 1e-9);
        assert!(r.entries.iter().all(|e| e.max_fpp < r.bound));
        assert!(r.entries[2].max_fpp < r.entries[0].max_fpp);
    }

    #[test]
    fn sphere_demo_nonnegative() {
        let r = sphere_stability_demo(2, 1, 5, 3, 16).unwrap();
        assert!(r.min >= -1e-6, "{r:?}");
        let r = sphere_stability_demo(2, 3, 3, 3, 16).unwrap();
        assert!(r.min >= -1e-6, "{r:?}");
    }
}
