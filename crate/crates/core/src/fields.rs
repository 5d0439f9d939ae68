//! Discrete sections of the normal bundle.
//!
//! A field stores its normal-frame components `V^alpha` at every node and
//! the normal covariant derivative `<nabla^perp_{e_i} V, e_alpha>` in the
//! orthonormal tangent frame.

use crate::models::{evaluate_geometry, GeometryData};
use crate::par;
use crate::quadrature::WeightedGrid;

#[derive(Debug, Clone, PartialEq)]
pub struct NormalField {
    pub n: usize,
    pub p: usize,
    /// `values[q * p + alpha]`.
    pub values: Vec<f64>,
    /// `cov_grad[(q * n + i) * p + alpha]`.
    pub cov_grad: Vec<f64>,
}

/// Relative step for differentiating ambient closures.
const AMBIENT_STEP: f64 = 1e-5;

impl NormalField {
    pub fn zeros(grid: &WeightedGrid) -> Self {
        let (n, p, len) = (grid.n(), grid.p(), grid.len());
        Self { n, p, values: vec![0.0; len * p], cov_grad: vec![0.0; len * n * p] }
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.p
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn at(&self, q: usize) -> &[f64] {
        &self.values[q * self.p..(q + 1) * self.p]
    }

    /// `<nabla^perp_{e_i} V, e_alpha>` at node `q`.
    pub fn grad(&self, q: usize, i: usize, alpha: usize) -> f64 {
        self.cov_grad[(q * self.n + i) * self.p + alpha]
    }

    pub fn grad_sq(&self, q: usize) -> f64 {
        let b = q * self.n * self.p;
        self.cov_grad[b..b + self.n * self.p].iter().map(|v| v * v).sum()
    }

    fn assemble<F>(grid: &WeightedGrid, f: F) -> Self
    where
        F: Fn(usize, &GeometryData) -> (Vec<f64>, Vec<f64>) + Sync + Send,
    {
        let (n, p) = (grid.n(), grid.p());
        let per_node = par::map_range(grid.len(), |q| f(q, &grid.geometry[q]));
        let mut values = Vec::with_capacity(grid.len() * p);
        let mut cov_grad = Vec::with_capacity(grid.len() * n * p);
        for (v, c) in per_node {
            values.extend(v);
            cov_grad.extend(c);
        }
        Self { n, p, values, cov_grad }
    }

    /// Normal projection of an ambient vector field `w(x)`. The covariant
    /// derivative uses `(D_X w)^perp - A(X, w^T)`, with `D_X w` from central
    /// differences in the ambient space.
    pub fn from_ambient<W>(grid: &WeightedGrid, w: W) -> Self
    where
        W: Fn(&[f64]) -> Vec<f64> + Sync + Send,
    {
        let step = AMBIENT_STEP * grid.model.length_scale();
        Self::assemble(grid, |_, g| {
            let (n, p) = (g.n, g.p);
            let x = &g.position;
            let wx = w(x);
            let vals = g.normal_coeffs(&wx);
            let wt = g.tangent_coeffs_of(&wx);
            let mut cov = vec![0.0; n * p];
            for i in 0..n {
                let e = &g.tangent_frame[i];
                let xp: Vec<f64> = x.iter().zip(e).map(|(a, b)| a + step * b).collect();
                let xm: Vec<f64> = x.iter().zip(e).map(|(a, b)| a - step * b).collect();
                let (wp, wm) = (w(&xp), w(&xm));
                let dw: Vec<f64> = wp.iter().zip(&wm).map(|(a, b)| (a - b) / (2.0 * step)).collect();
                let dn = g.normal_coeffs(&dw);
                for al in 0..p {
                    let corr: f64 = (0..n).map(|j| wt[j] * g.h(al, i, j)).sum();
                    cov[i * p + al] = dn[al] - corr;
                }
            }
            (vals, cov)
        })
    }

    /// Field from frame components: `f` returns `V^alpha` and the parameter
    /// derivatives `d_a V^alpha` (indexed `a * p + alpha`).
    pub fn from_frame_components<F>(grid: &WeightedGrid, f: F) -> Self
    where
        F: Fn(usize, &GeometryData) -> (Vec<f64>, Vec<f64>) + Sync + Send,
    {
        Self::assemble(grid, |q, g| {
            let (n, p) = (g.n, g.p);
            let (v, dv) = f(q, g);
            let mut cov = vec![0.0; n * p];
            for i in 0..n {
                for al in 0..p {
                    let mut s = 0.0;
                    for a in 0..n {
                        let conn: f64 = (0..p).map(|b| v[b] * g.omega(a, b, al)).sum();
                        s += g.tangent_coeffs[i * n + a] * (dv[a * p + al] + conn);
                    }
                    cov[i * p + al] = s;
                }
            }
            (v, cov)
        })
    }

    /// `f * e_alpha` for a scalar `f` with parameter gradient.
    pub fn scalar_times_frame<F>(grid: &WeightedGrid, alpha: usize, f: F) -> Self
    where
        F: Fn(usize, &GeometryData) -> (f64, Vec<f64>) + Sync + Send,
    {
        let p = grid.p();
        Self::from_frame_components(grid, |q, g| {
            let (v, dv) = f(q, g);
            let mut vals = vec![0.0; p];
            vals[alpha] = v;
            let mut d = vec![0.0; g.n * p];
            for (a, da) in dv.iter().enumerate() {
                d[a * p + alpha] = *da;
            }
            (vals, d)
        })
    }

    /// The mean curvature vector as a field; component derivatives are
    /// central differences of the chart geometry.
    pub fn mean_curvature(grid: &WeightedGrid) -> Self {
        let model = &grid.model;
        let steps: Vec<f64> = model.param_extents().iter().map(|e| 1e-4 * e).collect();
        Self::from_frame_components(grid, |q, g| {
            let (n, p) = (g.n, g.p);
            let mut d = vec![0.0; n * p];
            for a in 0..n {
                let mut up = grid.nodes[q].clone();
                let mut um = up.clone();
                up[a] += steps[a];
                um[a] -= steps[a];
                match (evaluate_geometry(model, &up), evaluate_geometry(model, &um)) {
                    (Ok(gp), Ok(gm)) => {
                        for al in 0..p {
                            d[a * p + al] = (gp.mean_curvature[al] - gm.mean_curvature[al]) / (2.0 * steps[a]);
                        }
                    }
                    _ => return (g.mean_curvature.clone(), vec![f64::NAN; n * p]),
                }
            }
            (g.mean_curvature.clone(), d)
        })
    }

    pub fn ambient_at(&self, g: &GeometryData, q: usize) -> Vec<f64> {
        g.normal_vector(self.at(q))
    }

    /// Ambient derivative `d_a V` along the chart at node `q`: the covariant
    /// part plus the tangential part `-<V, d_a d_b x> g^{bc} d_c x`.
    pub fn ambient_param_derivative(&self, g: &GeometryData, q: usize) -> Vec<Vec<f64>> {
        let (n, p) = (self.n, self.p);
        let vamb = self.ambient_at(g, q);
        (0..n)
            .map(|a| {
                // covariant part in parameter direction: sum_i L_ai cov_i with
                // L_ai = <d_a x, e_i>
                let mut out = vec![0.0; g.ambient];
                for al in 0..p {
                    let c: f64 = (0..n)
                        .map(|i| {
                            let l: f64 = g.tangents[a].iter().zip(&g.tangent_frame[i]).map(|(x, y)| x * y).sum();
                            l * self.grad(q, i, al)
                        })
                        .sum();
                    for (o, e) in out.iter_mut().zip(&g.normal_frame[al]) {
                        *o += c * e;
                    }
                }
                for b in 0..n {
                    let vb: f64 = vamb.iter().zip(&g.hessian[a * n + b]).map(|(x, y)| x * y).sum();
                    for c in 0..n {
                        let coef = -vb * g.inverse_metric[b * n + c];
                        for (o, t) in out.iter_mut().zip(&g.tangents[c]) {
                            *o += coef * t;
                        }
                    }
                }
                out
            })
            .collect()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            n: self.n,
            p: self.p,
            values: self.values.iter().map(|v| v * s).collect(),
            cov_grad: self.cov_grad.iter().map(|v| v * s).collect(),
        }
    }

    /// `self + s * other`.
    pub fn add_scaled(&self, s: f64, other: &NormalField) -> Self {
        Self {
            n: self.n,
            p: self.p,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + s * b).collect(),
            cov_grad: self.cov_grad.iter().zip(&other.cov_grad).map(|(a, b)| a + s * b).collect(),
        }
    }

    /// Multiply pointwise by a scalar `phi` with tangent-frame gradient.
    pub fn times_scalar(&self, phi: &[f64], dphi: &[Vec<f64>]) -> Self {
        let (n, p) = (self.n, self.p);
        let mut out = self.clone();
        for q in 0..self.len() {
            for al in 0..p {
                let v = self.values[q * p + al];
                out.values[q * p + al] = phi[q] * v;
                for i in 0..n {
                    let k = (q * n + i) * p + al;
                    out.cov_grad[k] = phi[q] * self.cov_grad[k] + dphi[q][i] * v;
                }
            }
        }
        out
    }
}
