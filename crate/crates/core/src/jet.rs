//! Second-order jets: a value with its gradient and Hessian in a fixed
//! number of variables. Products follow the Leibniz rule exactly, which is
//! all the analytic charts and basis tabulations need.

use std::ops::{Add, Mul, Neg, Sub};

#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub d: Vec<f64>,
    /// Row-major `dim x dim`.
    pub dd: Vec<f64>,
}

impl Jet {
    pub fn constant(v: f64, dim: usize) -> Self {
        Self { v, d: vec![0.0; dim], dd: vec![0.0; dim * dim] }
    }

    /// The coordinate function `u_k` evaluated at `value`.
    pub fn variable(value: f64, k: usize, dim: usize) -> Self {
        let mut j = Self::constant(value, dim);
        j.d[k] = 1.0;
        j
    }

    pub fn dim(&self) -> usize {
        self.d.len()
    }

    pub fn hess(&self, a: usize, b: usize) -> f64 {
        self.dd[a * self.dim() + b]
    }

    /// Compose with a scalar function given its value and first two derivatives.
    pub fn chain(&self, f: f64, f1: f64, f2: f64) -> Self {
        let n = self.dim();
        let mut out = Self::constant(f, n);
        for a in 0..n {
            out.d[a] = f1 * self.d[a];
            for b in 0..n {
                out.dd[a * n + b] = f2 * self.d[a] * self.d[b] + f1 * self.dd[a * n + b];
            }
        }
        out
    }

    pub fn sin(&self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(s, c, -s)
    }

    pub fn cos(&self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(c, -s, -c)
    }

    pub fn powi(&self, k: u32) -> Self {
        match k {
            0 => Self::constant(1.0, self.dim()),
            1 => self.clone(),
            _ => {
                let kf = k as f64;
                let p2 = self.v.powi(k as i32 - 2);
                self.chain(p2 * self.v * self.v, kf * p2 * self.v, kf * (kf - 1.0) * p2)
            }
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            v: self.v * s,
            d: self.d.iter().map(|x| x * s).collect(),
            dd: self.dd.iter().map(|x| x * s).collect(),
        }
    }
}

impl Add for &Jet {
    type Output = Jet;
    fn add(self, o: &Jet) -> Jet {
        Jet {
            v: self.v + o.v,
            d: self.d.iter().zip(&o.d).map(|(a, b)| a + b).collect(),
            dd: self.dd.iter().zip(&o.dd).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &Jet {
    type Output = Jet;
    fn sub(self, o: &Jet) -> Jet {
        self + &(-o)
    }
}

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Mul for &Jet {
    type Output = Jet;
    fn mul(self, o: &Jet) -> Jet {
        let n = self.dim();
        let mut out = Jet::constant(self.v * o.v, n);
        for a in 0..n {
            out.d[a] = self.d[a] * o.v + self.v * o.d[a];
            for b in 0..n {
                let i = a * n + b;
                out.dd[i] = self.dd[i] * o.v
                    + self.d[a] * o.d[b]
                    + self.d[b] * o.d[a]
                    + self.v * o.dd[i];
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_rule_against_closed_form() {
        // f(u, v) = sin(u) * v^3 at (0.7, 1.3)
        let u = Jet::variable(0.7, 0, 2);
        let v = Jet::variable(1.3, 1, 2);
        let f = &u.sin() * &v.powi(3);
        let (s, c) = 0.7f64.sin_cos();
        assert!((f.v - s * 1.3f64.powi(3)).abs() < 1e-14);
        assert!((f.d[0] - c * 1.3f64.powi(3)).abs() < 1e-14);
        assert!((f.d[1] - 3.0 * s * 1.3f64.powi(2)).abs() < 1e-14);
        assert!((f.hess(0, 0) + s * 1.3f64.powi(3)).abs() < 1e-14);
        assert!((f.hess(0, 1) - 3.0 * c * 1.3f64.powi(2)).abs() < 1e-14);
        assert!((f.hess(1, 0) - f.hess(0, 1)).abs() < 1e-15);
        assert!((f.hess(1, 1) - 6.0 * s * 1.3).abs() < 1e-14);
    }
}
