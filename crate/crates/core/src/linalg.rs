//! Dense symmetric eigen helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigenpairs sorted ascending; ties keep the solver's order.
pub struct SortedEigen {
    pub values: Vec<f64>,
    /// Columns are eigenvectors, matching `values`.
    pub vectors: DMatrix<f64>,
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// `max|M - M^T| / max|M|`, zero for the zero matrix.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let scale = m.amax();
    if scale == 0.0 {
        return 0.0;
    }
    (m - m.transpose()).amax() / scale
}

pub fn sym_eigen(m: &DMatrix<f64>) -> Result<SortedEigen> {
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::EigensolverFailure("matrix has non-finite entries".into()));
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(i).into_owned();
        // Fix the sign so output is reproducible: largest component positive.
        let imax = col.iamax();
        if col[imax] < 0.0 {
            col = -col;
        }
        vectors.set_column(k, &col);
    }
    Ok(SortedEigen { values, vectors })
}

/// Whitening map `S` with `S^T B S = I` on the numerically nonsingular part of
/// a positive semidefinite `B`. Directions with eigenvalue below
/// `rel_tol * max` are dropped, so `S` may have fewer columns than rows.
pub fn whitening(b: &DMatrix<f64>, rel_tol: f64) -> Result<DMatrix<f64>> {
    let eig = sym_eigen(b)?;
    let max = eig.values.iter().cloned().fold(0.0, f64::max);
    if max <= 0.0 {
        return Err(Error::EigensolverFailure("mass matrix is not positive".into()));
    }
    let keep: Vec<usize> = (0..eig.values.len())
        .filter(|&i| eig.values[i] > rel_tol * max)
        .collect();
    let mut s = DMatrix::zeros(b.nrows(), keep.len());
    for (k, &i) in keep.iter().enumerate() {
        let col = eig.vectors.column(i) / eig.values[i].sqrt();
        s.set_column(k, &col);
    }
    Ok(s)
}

/// Moore-Penrose pseudo-inverse of a symmetric positive semidefinite matrix.
pub fn psd_pinv(m: &DMatrix<f64>, rel_tol: f64) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let eig = sym_eigen(m)?;
    let max = eig.values.iter().cloned().fold(0.0, f64::max);
    let mut out = DMatrix::zeros(n, n);
    if max <= 0.0 {
        return Ok(out);
    }
    for i in 0..n {
        let lam = eig.values[i];
        if lam > rel_tol * max {
            let v = eig.vectors.column(i);
            out += (v * v.transpose()) / lam;
        }
    }
    Ok(out)
}

/// Generalized symmetric problem `A c = mu B c` with `B` positive semidefinite.
/// Returns eigenvalues and B-orthonormal coefficient vectors (columns).
pub fn generalized_sym_eigen(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    rel_tol: f64,
) -> Result<(SortedEigen, DMatrix<f64>)> {
    let s = whitening(b, rel_tol)?;
    let reduced = s.transpose() * a * &s;
    let eig = sym_eigen(&reduced)?;
    let vectors = &s * &eig.vectors;
    Ok((SortedEigen { values: eig.values, vectors }, s))
}

pub fn quad_form(m: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    x.dot(&(m * x))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generalized_problem_on_diagonal_pencil() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 9.0, 1.0]));
        let b = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 3.0, 0.5]));
        let (eig, _) = generalized_sym_eigen(&a, &b, 1e-12).unwrap();
        assert!((eig.values[0] - 2.0).abs() < 1e-12);
        assert!((eig.values[1] - 2.0).abs() < 1e-12);
        assert!((eig.values[2] - 3.0).abs() < 1e-12);
        let gram = eig.vectors.transpose() * &b * &eig.vectors;
        assert!((gram - DMatrix::identity(3, 3)).amax() < 1e-12);
    }

    #[test]
    fn pinv_of_rank_deficient_projector() {
        let v = DVector::from_vec(vec![1.0, 1.0, 0.0]) / 2f64.sqrt();
        let p = &v * v.transpose() * 4.0;
        let pi = psd_pinv(&p, 1e-12).unwrap();
        let expect = &v * v.transpose() / 4.0;
        assert!((pi - expect).amax() < 1e-14);
    }
}
