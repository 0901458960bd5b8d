//! Small dense-matrix helpers not provided directly by nalgebra.

use crate::scalar::Scalar;
use nalgebra::{Complex, DMatrix};

pub(crate) fn hstack<T: Scalar>(blocks: &[&DMatrix<T>]) -> DMatrix<T> {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut c = 0;
    for b in blocks {
        debug_assert_eq!(b.nrows(), rows);
        out.view_mut((0, c), (rows, b.ncols())).copy_from(b);
        c += b.ncols();
    }
    out
}

pub(crate) fn vstack<T: Scalar>(blocks: &[&DMatrix<T>]) -> DMatrix<T> {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        debug_assert_eq!(b.ncols(), cols);
        out.view_mut((r, 0), (b.nrows(), cols)).copy_from(b);
        r += b.nrows();
    }
    out
}

pub(crate) fn blockdiag<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>) -> DMatrix<T> {
    let mut out = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((a.nrows(), a.ncols()), b.shape()).copy_from(b);
    out
}

/// `[[a, b], [c, d]]` with consistent block sizes.
pub(crate) fn block2x2<T: Scalar>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    c: &DMatrix<T>,
    d: &DMatrix<T>,
) -> DMatrix<T> {
    vstack(&[&hstack(&[a, b]), &hstack(&[c, d])])
}

pub(crate) fn symmetrize<T: Scalar>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * T::lit(0.5)
}

/// Largest singular value; zero for empty matrices.
pub(crate) fn sigma_max<T: Scalar>(m: &DMatrix<T>) -> T {
    if m.is_empty() {
        return T::zero();
    }
    m.singular_values().max()
}

pub(crate) fn is_zero<T: Scalar>(m: &DMatrix<T>) -> bool {
    m.iter().all(|x| *x == T::zero())
}

pub(crate) fn to_complex<T: Scalar>(m: &DMatrix<T>) -> DMatrix<Complex<T>> {
    m.map(|x| Complex::new(x, T::zero()))
}

/// Eigenvalues of a symmetric matrix, ascending.
pub(crate) fn sym_eigenvalues<T: Scalar>(m: &DMatrix<T>) -> Vec<T> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut ev: Vec<T> = symmetrize(m).symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    ev
}

/// Symmetric positive semidefinite square root factor `L` with `m = L L^T`,
/// negative eigenvalues (round-off) clipped to zero.
pub(crate) fn psd_factor<T: Scalar>(m: &DMatrix<T>) -> DMatrix<T> {
    let eig = symmetrize(m).symmetric_eigen();
    let mut l = eig.eigenvectors.clone();
    for (j, lam) in eig.eigenvalues.iter().enumerate() {
        let s = lam.max(T::zero()).sqrt();
        l.column_mut(j).scale_mut(s);
    }
    l
}
