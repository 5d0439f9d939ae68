//! One-dimensional Gauss rules.
//!
//! Nodes come from the Jacobi matrix eigenvalues and are polished by Newton
//! steps on the orthonormal three-term recurrence; weights use the
//! Christoffel function `1 / sum_k p_k(x)^2`, which keeps full relative
//! accuracy in the tails of the Hermite rule.

use nalgebra::DMatrix;

use crate::linalg::sym_eigen;

#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Orthonormal family with `b_{k+1} p_{k+1} = x p_k - b_k p_{k-1}`.
struct Family {
    mass: f64,
    off_diag: fn(usize) -> f64,
}

impl Family {
    /// Values of `p_0..p_{n}` and the derivative of `p_n` at `x`.
    fn eval(&self, n: usize, x: f64) -> (Vec<f64>, f64) {
        let mut p = Vec::with_capacity(n + 1);
        let mut dp = Vec::with_capacity(n + 1);
        p.push(1.0 / self.mass.sqrt());
        dp.push(0.0);
        for k in 0..n {
            let bk1 = (self.off_diag)(k + 1);
            let (pm, dpm, bk) = if k == 0 { (0.0, 0.0, 0.0) } else { (p[k - 1], dp[k - 1], (self.off_diag)(k)) };
            let next = (x * p[k] - bk * pm) / bk1;
            let dnext = (p[k] + x * dp[k] - bk * dpm) / bk1;
            p.push(next);
            dp.push(dnext);
        }
        let d = dp[n];
        (p, d)
    }

    fn rule(&self, n: usize) -> Rule {
        assert!(n >= 1, "a Gauss rule needs at least one node");
        let mut jac = DMatrix::zeros(n, n);
        for k in 1..n {
            let b = (self.off_diag)(k);
            jac[(k, k - 1)] = b;
            jac[(k - 1, k)] = b;
        }
        let mut nodes = sym_eigen(&jac).expect("finite Jacobi matrix").values;
        for x in nodes.iter_mut() {
            for _ in 0..4 {
                let (p, dp) = self.eval(n, *x);
                if dp == 0.0 {
                    break;
                }
                let step = p[n] / dp;
                *x -= step;
                if step.abs() <= 1e-16 * x.abs().max(1.0) {
                    break;
                }
            }
        }
        // Symmetric families: enforce exact symmetry of the node set.
        for i in 0..n / 2 {
            let m = 0.5 * (nodes[n - 1 - i] - nodes[i]);
            nodes[i] = -m;
            nodes[n - 1 - i] = m;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        let weights = nodes
            .iter()
            .map(|&x| {
                let (p, _) = self.eval(n - 1, x);
                1.0 / p.iter().map(|v| v * v).sum::<f64>()
            })
            .collect();
        Rule { nodes, weights }
    }
}

/// Gauss-Legendre on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> Rule {
    Family { mass: 2.0, off_diag: |k| k as f64 / ((4 * k * k - 1) as f64).sqrt() }.rule(n)
}

/// Gauss-Legendre mapped to `[lo, hi]`.
pub fn gauss_legendre_on(n: usize, lo: f64, hi: f64) -> Rule {
    let r = gauss_legendre(n);
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    Rule {
        nodes: r.nodes.iter().map(|x| mid + half * x).collect(),
        weights: r.weights.iter().map(|w| w * half).collect(),
    }
}

/// Gauss-Hermite for the weight `exp(-s^2/2)` on the real line.
pub fn gauss_hermite(n: usize) -> Rule {
    Family { mass: (2.0 * std::f64::consts::PI).sqrt(), off_diag: |k| (k as f64).sqrt() }.rule(n)
}

/// Uniform periodic rule on `[0, 2 pi)`.
pub fn periodic(n: usize) -> Rule {
    let h = 2.0 * std::f64::consts::PI / n as f64;
    Rule { nodes: (0..n).map(|i| i as f64 * h).collect(), weights: vec![h; n] }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn double_factorial(k: u32) -> f64 {
        (1..=k).rev().step_by(2).map(|x| x as f64).product()
    }

    #[test]
    fn legendre_integrates_polynomials_exactly() {
        let r = gauss_legendre(10);
        for k in 0..20u32 {
            let q: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x.powi(k as i32)).sum();
            let exact = if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
            assert!((q - exact).abs() < 1e-14, "k={k}: {q} vs {exact}");
        }
    }

    #[test]
    fn hermite_moments_match_gaussian() {
        let r = gauss_hermite(64);
        let norm = (2.0 * std::f64::consts::PI).sqrt();
        for k in (0..40u32).step_by(2) {
            let q: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x.powi(k as i32)).sum();
            let exact = norm * if k == 0 { 1.0 } else { double_factorial(k - 1) };
            assert!(((q - exact) / exact).abs() < 1e-12, "k={k}: {q} vs {exact}");
        }
    }

    #[test]
    fn hermite_tail_weights_are_positive() {
        let r = gauss_hermite(128);
        assert!(r.weights.iter().all(|w| *w > 0.0 && w.is_finite()));
        let total: f64 = r.weights.iter().sum();
        assert!((total - (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-13);
    }
}
