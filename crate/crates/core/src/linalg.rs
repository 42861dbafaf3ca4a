//! Small dense complex linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result, C64};

pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn scaled_identity(n: usize, scale: f64) -> CMatrix {
    CMatrix::from_diagonal_element(n, n, C64::new(scale, 0.0))
}

pub fn to_vector(v: &[C64]) -> CVector {
    CVector::from_column_slice(v)
}

/// Max |A - A*| entrywise.
pub fn hermiticity_residual(a: &CMatrix) -> f64 {
    let adj = a.adjoint();
    a.iter()
        .zip(adj.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Eigenvalues of a Hermitian matrix, ascending. The input is symmetrized first.
pub fn hermitian_eigenvalues(a: &CMatrix) -> Vec<f64> {
    let sym = (a + a.adjoint()) * C64::new(0.5, 0.0);
    let mut ev: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn max_eigenvalue(a: &CMatrix) -> f64 {
    *hermitian_eigenvalues(a).last().expect("non-empty matrix")
}

pub fn spectral_radius_hermitian(a: &CMatrix) -> f64 {
    hermitian_eigenvalues(a)
        .into_iter()
        .map(f64::abs)
        .fold(0.0, f64::max)
}

pub fn solve(a: &CMatrix, b: &CVector, what: &'static str) -> Result<CVector> {
    a.clone().lu().solve(b).ok_or(Error::Singular(what))
}

/// Column-stacking vectorization.
pub fn vec(a: &CMatrix) -> CVector {
    CVector::from_column_slice(a.as_slice())
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn trace(a: &CMatrix) -> C64 {
    a.trace()
}

pub fn norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}
