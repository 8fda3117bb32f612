//! Small dense helpers shared by the frequency-domain routines.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type Mat = DMatrix<f64>;
pub type CMat = DMatrix<Complex64>;

pub fn frobenius_sq(a: &Mat) -> f64 {
    a.iter().map(|x| x * x).sum()
}

pub fn symmetrize(a: &Mat) -> Mat {
    (a + a.transpose()) * 0.5
}

pub fn hermitize(a: &CMat) -> CMat {
    (a + a.adjoint()).map(|z| z * 0.5)
}

/// Eigenvalues of a Hermitian matrix in ascending order.
pub fn hermitian_eigenvalues(a: &CMat) -> DVector<f64> {
    let mut ev = hermitize(a).symmetric_eigenvalues();
    ev.as_mut_slice().sort_by(|x, y| x.total_cmp(y));
    ev
}

pub fn symmetric_eigenvalues(a: &Mat) -> DVector<f64> {
    let mut ev = symmetrize(a).symmetric_eigenvalues();
    ev.as_mut_slice().sort_by(|x, y| x.total_cmp(y));
    ev
}

/// Hermitian square root `V diag(sqrt(max(l, 0))) V*`.
pub fn hermitian_sqrt(a: &CMat) -> CMat {
    let eig = hermitize(a).symmetric_eigen();
    let vecs = &eig.eigenvectors;
    let scaled = DMatrix::from_fn(vecs.nrows(), vecs.ncols(), |i, j| {
        vecs[(i, j)] * eig.eigenvalues[j].max(0.0).sqrt()
    });
    &scaled * vecs.adjoint()
}

/// Inverse of a Hermitian matrix through its eigendecomposition, or `None` when an eigenvalue
/// has magnitude at most `tol`. The second component is the eigenvalue closest to zero.
pub fn hermitian_inverse(a: &CMat, tol: f64) -> (Option<CMat>, f64) {
    let eig = hermitize(a).symmetric_eigen();
    let smallest = eig
        .eigenvalues
        .iter()
        .copied()
        .min_by(|x, y| x.abs().total_cmp(&y.abs()))
        .unwrap_or(f64::INFINITY);
    if smallest.abs() <= tol {
        return (None, smallest);
    }
    let vecs = &eig.eigenvectors;
    let scaled = DMatrix::from_fn(vecs.nrows(), vecs.ncols(), |i, j| {
        vecs[(i, j)] / eig.eigenvalues[j]
    });
    (Some(hermitize(&(&scaled * vecs.adjoint()))), smallest)
}

pub fn to_complex(a: &Mat) -> CMat {
    a.map(|x| Complex64::new(x, 0.0))
}

/// Real part, together with the largest imaginary magnitude that was dropped.
pub fn real_part(a: &CMat) -> (Mat, f64) {
    let residue = a.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    (a.map(|z| z.re), residue)
}
