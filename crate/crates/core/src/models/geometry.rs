//! Pointwise extrinsic geometry of a chart.
//!
//! Sign convention: `h^a_ij = <d^2 x(e_i, e_j), e_a>` in an orthonormal
//! tangent frame, so that `H = -x` on the round sphere of radius `sqrt(n)`.

use nalgebra::DMatrix;

use super::chart::{DerivativeMode, ShrinkerModel};
use crate::error::{Error, Result};

/// Gram determinant floor, relative to `scale^(2n)`.
pub const DEGENERACY_THRESHOLD: f64 = 1e-10;
/// Below this a normal seed is considered lost after projection.
const SEED_FLOOR: f64 = 1e-3;
/// `|H|` below this leaves the principal normal undefined.
pub const VANISHING_H: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct GeometryData {
    pub n: usize,
    pub p: usize,
    pub ambient: usize,
    pub param: Vec<f64>,
    pub position: Vec<f64>,
    /// `d_a x`, one ambient vector per parameter.
    pub tangents: Vec<Vec<f64>>,
    /// `d_a d_b x`, indexed `a * n + b`.
    pub hessian: Vec<Vec<f64>>,
    /// Row-major `n x n`.
    pub metric: Vec<f64>,
    pub inverse_metric: Vec<f64>,
    pub sqrt_det: f64,
    /// `e_i = sum_a T[i * n + a] d_a x`.
    pub tangent_coeffs: Vec<f64>,
    pub tangent_frame: Vec<Vec<f64>>,
    pub normal_frame: Vec<Vec<f64>>,
    /// `omega[(a * p + b) * p + c] = <d_a e_b, e_c>`.
    pub connection: Vec<f64>,
    /// `h[(alpha * n + i) * n + j]`.
    pub second_fundamental: Vec<f64>,
    pub mean_curvature: Vec<f64>,
    /// Row-major `p x p`.
    pub sigma: Vec<f64>,
    pub sqnorm_a: f64,
    /// Frame coefficients of `H / |H|`; `None` where `|H|` vanishes.
    pub principal_normal: Option<Vec<f64>>,
    pub sqnorm_z: Option<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += a * xi);
}

impl GeometryData {
    pub fn h(&self, alpha: usize, i: usize, j: usize) -> f64 {
        self.second_fundamental[(alpha * self.n + i) * self.n + j]
    }

    pub fn omega(&self, a: usize, beta: usize, alpha: usize) -> f64 {
        self.connection[(a * self.p + beta) * self.p + alpha]
    }

    pub fn sigma_ab(&self, a: usize, b: usize) -> f64 {
        self.sigma[a * self.p + b]
    }

    pub fn sqnorm_h(&self) -> f64 {
        self.mean_curvature.iter().map(|x| x * x).sum()
    }

    /// Ambient vector with the given normal-frame coefficients.
    pub fn normal_vector(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut v = vec![0.0; self.ambient];
        for (c, e) in coeffs.iter().zip(&self.normal_frame) {
            axpy(&mut v, *c, e);
        }
        v
    }

    pub fn mean_curvature_vector(&self) -> Vec<f64> {
        self.normal_vector(&self.mean_curvature)
    }

    /// Normal-frame coefficients `<v, e_alpha>`.
    pub fn normal_coeffs(&self, v: &[f64]) -> Vec<f64> {
        self.normal_frame.iter().map(|e| dot(e, v)).collect()
    }

    /// Tangent-frame coefficients `<v, e_i>`.
    pub fn tangent_coeffs_of(&self, v: &[f64]) -> Vec<f64> {
        self.tangent_frame.iter().map(|e| dot(e, v)).collect()
    }

    pub fn normal_part(&self, v: &[f64]) -> Vec<f64> {
        self.normal_vector(&self.normal_coeffs(v))
    }

    pub fn tangent_part(&self, v: &[f64]) -> Vec<f64> {
        let mut t = vec![0.0; self.ambient];
        for e in &self.tangent_frame {
            axpy(&mut t, dot(e, v), e);
        }
        t
    }

    /// Christoffel symbols `Gamma^c_ab`, indexed `(c * n + a) * n + b`.
    pub fn christoffel(&self) -> Vec<f64> {
        let n = self.n;
        let mut low = vec![0.0; n * n * n];
        for a in 0..n {
            for b in 0..n {
                for d in 0..n {
                    low[(d * n + a) * n + b] = dot(&self.hessian[a * n + b], &self.tangents[d]);
                }
            }
        }
        let mut out = vec![0.0; n * n * n];
        for c in 0..n {
            for a in 0..n {
                for b in 0..n {
                    out[(c * n + a) * n + b] =
                        (0..n).map(|d| self.inverse_metric[c * n + d] * low[(d * n + a) * n + b]).sum();
                }
            }
        }
        out
    }

    /// Rotate the normal frame by an orthogonal `p x p` matrix `q`
    /// (`e'_a = sum_b q[a][b] e_b`) and transform every normal-indexed tensor.
    /// The rotation is constant, so the connection transforms tensorially.
    pub fn rotate_normal_frame(&self, q: &DMatrix<f64>) -> GeometryData {
        let (n, p) = (self.n, self.p);
        let mut out = self.clone();
        out.normal_frame = (0..p)
            .map(|a| {
                let mut e = vec![0.0; self.ambient];
                for b in 0..p {
                    axpy(&mut e, q[(a, b)], &self.normal_frame[b]);
                }
                e
            })
            .collect();
        for a in 0..p {
            for i in 0..n {
                for j in 0..n {
                    out.second_fundamental[(a * n + i) * n + j] = (0..p).map(|b| q[(a, b)] * self.h(b, i, j)).sum();
                }
            }
            out.mean_curvature[a] = (0..p).map(|b| q[(a, b)] * self.mean_curvature[b]).sum();
        }
        for a in 0..p {
            for b in 0..p {
                out.sigma[a * p + b] = (0..p)
                    .flat_map(|c| (0..p).map(move |d| (c, d)))
                    .map(|(c, d)| q[(a, c)] * q[(b, d)] * self.sigma_ab(c, d))
                    .sum();
            }
        }
        for k in 0..n {
            for a in 0..p {
                for b in 0..p {
                    out.connection[(k * p + a) * p + b] = (0..p)
                        .flat_map(|c| (0..p).map(move |d| (c, d)))
                        .map(|(c, d)| q[(a, c)] * q[(b, d)] * self.omega(k, c, d))
                        .sum();
                }
            }
        }
        out.principal_normal = self
            .principal_normal
            .as_ref()
            .map(|nu| (0..p).map(|a| (0..p).map(|b| q[(a, b)] * nu[b]).sum()).collect());
        out
    }
}

/// Position, first and second parameter derivatives.
struct RawJets {
    x: Vec<f64>,
    dx: Vec<Vec<f64>>,
    ddx: Vec<Vec<f64>>,
}

fn analytic_jets(model: &ShrinkerModel, u: &[f64]) -> RawJets {
    let n = model.intrinsic_dim();
    let jets = model.position_jets(u).expect("catalog chart");
    RawJets {
        x: jets.iter().map(|j| j.v).collect(),
        dx: (0..n).map(|a| jets.iter().map(|j| j.d[a]).collect()).collect(),
        ddx: (0..n * n).map(|ab| jets.iter().map(|j| j.dd[ab]).collect()).collect(),
    }
}

fn fd_steps(model: &ShrinkerModel, rel: f64) -> Vec<f64> {
    model.param_extents().iter().map(|e| rel * e).collect()
}

fn fd_first(model: &ShrinkerModel, u: &[f64], steps: &[f64]) -> Vec<Vec<f64>> {
    (0..u.len())
        .map(|a| {
            let mut up = u.to_vec();
            let mut um = u.to_vec();
            up[a] += steps[a];
            um[a] -= steps[a];
            let (xp, xm) = (model.position(&up), model.position(&um));
            xp.iter().zip(&xm).map(|(p, m)| (p - m) / (2.0 * steps[a])).collect()
        })
        .collect()
}

fn fd_jets(model: &ShrinkerModel, u: &[f64], first: f64, second: f64) -> RawJets {
    let n = u.len();
    let x = model.position(u);
    let dx = fd_first(model, u, &fd_steps(model, first));
    let h2 = fd_steps(model, second);
    let shifted = |da: (usize, f64), db: (usize, f64)| {
        let mut v = u.to_vec();
        v[da.0] += da.1;
        v[db.0] += db.1;
        model.position(&v)
    };
    let mut ddx = vec![Vec::new(); n * n];
    for a in 0..n {
        let mut up = u.to_vec();
        let mut um = u.to_vec();
        up[a] += h2[a];
        um[a] -= h2[a];
        let (xp, xm) = (model.position(&up), model.position(&um));
        ddx[a * n + a] = (0..x.len()).map(|c| (xp[c] - 2.0 * x[c] + xm[c]) / (h2[a] * h2[a])).collect();
        for b in a + 1..n {
            let pp = shifted((a, h2[a]), (b, h2[b]));
            let pm = shifted((a, h2[a]), (b, -h2[b]));
            let mp = shifted((a, -h2[a]), (b, h2[b]));
            let mm = shifted((a, -h2[a]), (b, -h2[b]));
            let v: Vec<f64> =
                (0..x.len()).map(|c| (pp[c] - pm[c] - mp[c] + mm[c]) / (4.0 * h2[a] * h2[b])).collect();
            ddx[a * n + b] = v.clone();
            ddx[b * n + a] = v;
        }
    }
    RawJets { x, dx, ddx }
}

/// Metric, inverse, `sqrt(det g)` and orthonormal tangent coefficients from
/// a Cholesky factor `g = L L^T`, `T = L^{-1}`.
fn tangent_structure(
    model: &ShrinkerModel,
    u: &[f64],
    dx: &[Vec<f64>],
) -> Result<(Vec<f64>, Vec<f64>, f64, Vec<f64>, Vec<Vec<f64>>)> {
    let n = dx.len();
    let g = DMatrix::from_fn(n, n, |a, b| dot(&dx[a], &dx[b]));
    let det = g.determinant();
    let floor = DEGENERACY_THRESHOLD * model.length_scale().powi(2 * n as i32);
    if !(det > floor) {
        return Err(Error::DegenerateMetric { param: u.to_vec(), det });
    }
    let chol = g.clone().cholesky().ok_or_else(|| Error::DegenerateMetric { param: u.to_vec(), det })?;
    let ginv = chol.inverse();
    let t = chol.l().try_inverse().ok_or_else(|| Error::DegenerateMetric { param: u.to_vec(), det })?;
    let ambient = dx[0].len();
    let frame: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut e = vec![0.0; ambient];
            for a in 0..n {
                axpy(&mut e, t[(i, a)], &dx[a]);
            }
            e
        })
        .collect();
    let flat = |m: &DMatrix<f64>| (0..n * n).map(|k| m[(k / n, k % n)]).collect::<Vec<f64>>();
    Ok((flat(&g), flat(&ginv), det.sqrt(), flat(&t), frame))
}

/// Determinant of the `n x n` matrix formed by the columns `cols` of `rows`.
fn minor_det(rows: &[Vec<f64>], cols: &[usize]) -> f64 {
    let n = rows.len();
    DMatrix::from_fn(n, n, |i, j| rows[i][cols[j]]).determinant()
}

/// Unit normal of a hypersurface via the generalized cross product.
fn cross_normal(tangents: &[Vec<f64>]) -> Vec<f64> {
    let big = tangents[0].len();
    let v: Vec<f64> = (0..big)
        .map(|k| {
            let cols: Vec<usize> = (0..big).filter(|&c| c != k).collect();
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            sign * minor_det(tangents, &cols)
        })
        .collect();
    let nv = dot(&v, &v).sqrt();
    v.iter().map(|c| c / nv).collect()
}

/// Gram-Schmidt of seed vectors against the tangent frame and each other.
fn frame_from_seeds(u: &[f64], tangent_frame: &[Vec<f64>], seeds: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(seeds.len());
    for (k, s) in seeds.iter().enumerate() {
        let mut v = s.clone();
        for e in tangent_frame.iter().chain(out.iter()) {
            let c = dot(e, &v);
            axpy(&mut v, -c, e);
        }
        // second pass for orthogonality at roundoff level
        for e in tangent_frame.iter().chain(out.iter()) {
            let c = dot(e, &v);
            axpy(&mut v, -c, e);
        }
        let nv = dot(&v, &v).sqrt();
        if nv < SEED_FLOOR * dot(s, s).sqrt().max(1e-300) {
            return Err(Error::FrameDiscontinuity(format!(
                "normal seed {k} degenerates at parameter {u:?} (projected norm {nv:.3e})"
            )));
        }
        out.push(v.iter().map(|c| c / nv).collect());
    }
    Ok(out)
}

fn unit(k: usize, dim: usize) -> Vec<f64> {
    let mut e = vec![0.0; dim];
    e[k] = 1.0;
    e
}

/// Pick `p` ambient basis vectors with the largest successive normal
/// components at the chart's reference point.
pub(crate) fn choose_pivots(model: &ShrinkerModel) -> Result<Vec<usize>> {
    let p = model.codim();
    if p <= 1 {
        return Ok(Vec::new());
    }
    let u = model.reference_param();
    let (first, _) = fd_step_pair(model);
    let dx = fd_first(model, &u, &fd_steps(model, first));
    let (_, _, _, _, frame) = tangent_structure(model, &u, &dx)?;
    let big = model.ambient_dim();
    let mut basis = frame;
    let mut pivots = Vec::new();
    for _ in 0..p {
        let (best, norm, vec) = (0..big)
            .filter(|k| !pivots.contains(k))
            .map(|k| {
                let mut v = unit(k, big);
                for e in &basis {
                    let c = dot(e, &v);
                    axpy(&mut v, -c, e);
                }
                let nv = dot(&v, &v).sqrt();
                (k, nv, v)
            })
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .expect("ambient dimension exceeds tangent dimension");
        if norm < SEED_FLOOR {
            return Err(Error::FrameDiscontinuity(format!("no normal pivot available at {u:?}")));
        }
        pivots.push(best);
        basis.push(vec.iter().map(|c| c / norm).collect());
    }
    Ok(pivots)
}

fn fd_step_pair(model: &ShrinkerModel) -> (f64, f64) {
    match model.derivative_mode() {
        DerivativeMode::FiniteDifference { first_step, second_step } => (first_step, second_step),
        DerivativeMode::Analytic => (1e-5, 1e-4),
    }
}

/// Numerically constructed normal frame at `u` (finite-difference tangents).
fn numeric_frame(model: &ShrinkerModel, u: &[f64]) -> Result<Vec<Vec<f64>>> {
    let (first, _) = fd_step_pair(model);
    let dx = fd_first(model, u, &fd_steps(model, first));
    let (_, _, _, _, tframe) = tangent_structure(model, u, &dx)?;
    let big = model.ambient_dim();
    let seeds: Vec<Vec<f64>> = if !model.is_custom() {
        model.frame_seeds(u)
    } else if model.codim() == 1 {
        vec![cross_normal(&dx)]
    } else {
        model.pivots().iter().map(|&k| unit(k, big)).collect()
    };
    frame_from_seeds(u, &tframe, &seeds)
}

/// Full geometry at a parameter point.
pub fn evaluate_geometry(model: &ShrinkerModel, u: &[f64]) -> Result<GeometryData> {
    let n = model.intrinsic_dim();
    let p = model.codim();
    let big = model.ambient_dim();
    if u.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: u.len() });
    }
    let analytic = model.derivative_mode() == DerivativeMode::Analytic && !model.is_custom();
    let raw = if analytic {
        analytic_jets(model, u)
    } else {
        let (first, second) = fd_step_pair(model);
        fd_jets(model, u, first, second)
    };
    if raw.x.len() != big {
        return Err(Error::DimensionMismatch { expected: big, got: raw.x.len() });
    }
    let (metric, inverse_metric, sqrt_det, tcoef, tangent_frame) = tangent_structure(model, u, &raw.dx)?;

    let (normal_frame, connection) = if analytic {
        let fj = model.frame_jets(u).expect("catalog frame");
        let frame: Vec<Vec<f64>> = fj.iter().map(|e| e.iter().map(|j| j.v).collect()).collect();
        let mut omega = vec![0.0; n * p * p];
        for a in 0..n {
            for b in 0..p {
                let de: Vec<f64> = fj[b].iter().map(|j| j.d[a]).collect();
                for c in 0..p {
                    omega[(a * p + b) * p + c] = dot(&de, &frame[c]);
                }
            }
        }
        (frame, omega)
    } else {
        let frame = numeric_frame(model, u)?;
        let (_, second) = fd_step_pair(model);
        let steps = fd_steps(model, second);
        let mut omega = vec![0.0; n * p * p];
        for a in 0..n {
            let mut up = u.to_vec();
            let mut um = u.to_vec();
            up[a] += steps[a];
            um[a] -= steps[a];
            let fp = numeric_frame(model, &up)?;
            let fm = numeric_frame(model, &um)?;
            for b in 0..p {
                let de: Vec<f64> = fp[b].iter().zip(&fm[b]).map(|(x, y)| (x - y) / (2.0 * steps[a])).collect();
                for c in 0..p {
                    omega[(a * p + b) * p + c] = dot(&de, &frame[c]);
                }
            }
        }
        (frame, omega)
    };

    // h^a_ij = sum_{a',b'} T_ia' T_jb' <d_a' d_b' x, e_alpha>
    let mut second_fundamental = vec![0.0; p * n * n];
    for al in 0..p {
        let hp: Vec<f64> = (0..n * n).map(|ab| dot(&raw.ddx[ab], &normal_frame[al])).collect();
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for a in 0..n {
                    for b in 0..n {
                        s += tcoef[i * n + a] * tcoef[j * n + b] * hp[a * n + b];
                    }
                }
                second_fundamental[(al * n + i) * n + j] = s;
            }
        }
    }
    let hh = |al: usize, i: usize, j: usize| second_fundamental[(al * n + i) * n + j];
    let mean_curvature: Vec<f64> = (0..p).map(|al| (0..n).map(|i| hh(al, i, i)).sum()).collect();
    let mut sigma = vec![0.0; p * p];
    for a in 0..p {
        for b in 0..p {
            sigma[a * p + b] = (0..n * n).map(|ij| hh(a, ij / n, ij % n) * hh(b, ij / n, ij % n)).sum();
        }
    }
    let sqnorm_a = (0..p).map(|a| sigma[a * p + a]).sum();
    let hnorm = mean_curvature.iter().map(|x| x * x).sum::<f64>().sqrt();
    let (principal_normal, sqnorm_z) = if hnorm > VANISHING_H / model.length_scale() {
        let nu: Vec<f64> = mean_curvature.iter().map(|x| x / hnorm).collect();
        let z = (0..n * n)
            .map(|ij| (0..p).map(|a| nu[a] * hh(a, ij / n, ij % n)).sum::<f64>().powi(2))
            .sum();
        (Some(nu), Some(z))
    } else {
        (None, None)
    };

    let all_finite = raw.x.iter().chain(second_fundamental.iter()).chain(connection.iter()).all(|v| v.is_finite());
    if !all_finite {
        return Err(Error::InvalidInput(format!("non-finite geometry at parameter {u:?}")));
    }

    Ok(GeometryData {
        n,
        p,
        ambient: big,
        param: u.to_vec(),
        position: raw.x,
        tangents: raw.dx,
        hessian: raw.ddx,
        metric,
        inverse_metric,
        sqrt_det,
        tangent_coeffs: tcoef,
        tangent_frame,
        normal_frame,
        connection,
        second_fundamental,
        mean_curvature,
        sigma,
        sqnorm_a,
        principal_normal,
        sqnorm_z,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame_orthonormality(g: &GeometryData) -> f64 {
        let all: Vec<&Vec<f64>> = g.tangent_frame.iter().chain(g.normal_frame.iter()).collect();
        let mut worst: f64 = 0.0;
        for (i, a) in all.iter().enumerate() {
            for (j, b) in all.iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot(a, b) - target).abs());
            }
        }
        worst
    }

    #[test]
    fn sphere_2_1_curvatures() {
        let m = ShrinkerModel::sphere(2, 1).unwrap();
        let g = evaluate_geometry(&m, &[0.8, 2.1]).unwrap();
        assert!((g.sqnorm_h() - 2.0).abs() < 1e-12);
        assert!((g.sqnorm_a - 1.0).abs() < 1e-12);
        assert!(frame_orthonormality(&g) < 1e-12);
        let hv = g.mean_curvature_vector();
        for (h, x) in hv.iter().zip(&g.position) {
            assert!((h + x).abs() < 1e-12);
        }
    }

    #[test]
    fn cylinder_curvatures() {
        let m = ShrinkerModel::cylinder(1, 2, 1).unwrap();
        let g = evaluate_geometry(&m, &[1.3, -0.4]).unwrap();
        assert!((g.sqnorm_h() - 1.0).abs() < 1e-12);
        assert!((g.sqnorm_z.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn plane_is_flat() {
        let m = ShrinkerModel::plane(2, 2).unwrap();
        let g = evaluate_geometry(&m, &[0.5, -1.5]).unwrap();
        assert_eq!(g.sqnorm_a, 0.0);
        assert!(g.principal_normal.is_none());
    }

    #[test]
    fn clifford_connection_vanishes_and_h_is_minus_x() {
        let m = ShrinkerModel::clifford_torus().unwrap();
        let g = evaluate_geometry(&m, &[0.3, 2.2]).unwrap();
        assert!(g.connection.iter().all(|w| w.abs() < 1e-14));
        let hv = g.mean_curvature_vector();
        for (h, x) in hv.iter().zip(&g.position) {
            assert!((h + x).abs() < 1e-12);
        }
        assert!((g.sqnorm_a - 2.0).abs() < 1e-12);
    }

    #[test]
    fn finite_difference_mode_tracks_analytic() {
        let m = ShrinkerModel::sphere(2, 2).unwrap();
        let u = [0.9, 0.4];
        let a = evaluate_geometry(&m, &u).unwrap();
        let f = evaluate_geometry(&m.clone().with_derivative_mode(DerivativeMode::default_finite_difference()), &u)
            .unwrap();
        assert!((a.sqnorm_a - f.sqnorm_a).abs() < 1e-5);
        assert!((a.sqnorm_h() - f.sqnorm_h()).abs() < 1e-5);
        assert!(frame_orthonormality(&f) < 1e-10);
    }

    #[test]
    fn wrong_radius_is_not_a_shrinker() {
        let m = ShrinkerModel::sphere(2, 1).unwrap().with_radius(1.0).unwrap();
        let g = evaluate_geometry(&m, &[0.8, 2.1]).unwrap();
        let hv = g.mean_curvature_vector();
        let r: f64 = hv.iter().zip(&g.position).map(|(h, x)| (h + x).powi(2)).sum::<f64>().sqrt();
        assert!((r - 1.0).abs() < 1e-12);
    }
}
