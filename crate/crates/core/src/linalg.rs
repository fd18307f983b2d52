//! Small dense linear-algebra helpers shared by both engines.
//!
//! All phase-space vectors use block ordering `(x_1..x_n, p_1..p_n)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use std::f64::consts::PI;

/// The symplectic form `[[0, I], [-I, 0]]` for `n` modes.
pub fn symplectic_form(n: usize) -> DMatrix<f64> {
    let mut omega = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        omega[(i, n + i)] = 1.0;
        omega[(n + i, i)] = -1.0;
    }
    omega
}

/// `cᵀ Ω d` for two phase-space coefficient vectors of equal length.
pub fn symplectic_product(c: &[f64], d: &[f64]) -> f64 {
    debug_assert_eq!(c.len(), d.len());
    let n = c.len() / 2;
    (0..n).map(|i| c[i] * d[n + i] - c[n + i] * d[i]).sum()
}

/// Reduce a phase to `(-π, π]`.
pub fn wrap_phase(phi: f64) -> f64 {
    let r = phi.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// Distance between two phases on the circle.
pub fn phase_distance(a: f64, b: f64) -> f64 {
    wrap_phase(a - b).abs()
}

/// Largest absolute entry of `S Ω Sᵀ - Ω`.
pub fn symplectic_defect(s: &DMatrix<f64>) -> f64 {
    let n = s.nrows() / 2;
    let omega = symplectic_form(n);
    (s * &omega * s.transpose() - omega).amax()
}

/// Symplectic eigenvalues of a covariance matrix, ascending, one per mode.
///
/// Uses `A = Σ^{1/2} Ω Σ^{1/2}`: `AᵀA` has each `ν_k²` twice.
pub fn symplectic_eigenvalues(cov: &DMatrix<f64>) -> Vec<f64> {
    let n = cov.nrows() / 2;
    let eig = SymmetricEigen::new(cov.clone());
    let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let root = &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals) * eig.eigenvectors.transpose();
    let a = &root * symplectic_form(n) * &root;
    let mut nu: Vec<f64> = SymmetricEigen::new(a.transpose() * &a)
        .eigenvalues
        .iter()
        .map(|v| v.max(0.0).sqrt())
        .collect();
    nu.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // eigenvalues come in degenerate pairs
    nu.chunks(2).map(|p| 0.5 * (p[0] + p[p.len() - 1])).collect()
}

/// Numerical rank of a row-stacked matrix.
pub fn rank(rows: &DMatrix<f64>, tol: f64) -> usize {
    if rows.nrows() == 0 || rows.ncols() == 0 {
        return 0;
    }
    rows.clone().svd(false, false).rank(tol)
}

/// Least-squares solution of `Aᵀ λ = c` (λ combines the rows of `A`), with the residual norm.
pub fn combine_rows(a: &DMatrix<f64>, c: &DVector<f64>) -> (DVector<f64>, f64) {
    let at = a.transpose();
    let svd = at.clone().svd(true, true);
    let lambda = svd
        .solve(c, 1e-12)
        .unwrap_or_else(|_| DVector::zeros(a.nrows()));
    let residual = (&at * &lambda - c).norm();
    (lambda, residual)
}

/// Matrix square root factor `L` with `L Lᵀ = Σ` for a positive semidefinite `Σ`.
///
/// Eigen-based so that singular marginals (ideal eigenstates) still factor.
pub fn psd_factor(cov: &DMatrix<f64>) -> DMatrix<f64> {
    if let Some(chol) = cov.clone().cholesky() {
        return chol.l();
    }
    let eig = SymmetricEigen::new(cov.clone());
    let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals)
}
