//! Continuous-time algebraic Riccati equation by the matrix sign function.

use super::eig::spectral_abscissa;
use crate::error::{Error, Result};
use crate::linalg;
use crate::scalar::Scalar;
use nalgebra::DMatrix;

const MAX_SIGN_STEPS: usize = 100;

/// Stabilizing solution of
/// `A^T X + X A - (X B + S) R^{-1} (B^T X + S^T) + Q = 0`
/// and the gain `F = -R^{-1} (B^T X + S^T)` placing the eigenvalues of
/// `A + B F` in the open left half plane.
#[derive(Debug, Clone, PartialEq)]
pub struct Lqr<T: Scalar> {
    pub x: DMatrix<T>,
    pub f: DMatrix<T>,
}

fn sign_function<T: Scalar>(h: &DMatrix<T>) -> Result<DMatrix<T>> {
    let m = h.nrows();
    let mut z = h.clone();
    for _ in 0..MAX_SIGN_STEPS {
        let lu = z.clone().lu();
        let inv = lu
            .try_inverse()
            .ok_or_else(|| Error::Numerical("Hamiltonian has eigenvalues on the imaginary axis".into()))?;
        let det = z.clone().lu().determinant().abs();
        let c = if det > T::zero() && det.is_finite() {
            det.powf(T::one() / T::lit(m as f64))
        } else {
            T::one()
        };
        let next = (&z / c + &inv * c) * T::lit(0.5);
        let delta = (&next - &z).norm();
        let size = next.norm();
        z = next;
        if !size.is_finite() {
            break;
        }
        if delta <= T::lit(1e3) * T::eps() * size {
            return Ok(z);
        }
    }
    if z.iter().all(|v| v.is_finite()) {
        Ok(z)
    } else {
        Err(Error::Numerical("matrix sign iteration diverged".into()))
    }
}

pub fn care<T: Scalar>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    q: &DMatrix<T>,
    r: &DMatrix<T>,
    s: &DMatrix<T>,
) -> Result<Lqr<T>> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n || q.shape() != (n, n) || r.nrows() != b.ncols() || s.shape() != b.shape() {
        return Err(Error::Dimension("Riccati data shapes".into()));
    }
    let r_inv = r
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidArgument("Riccati weight R must be positive definite".into()))?
        .inverse();
    let a_bar = a - b * &r_inv * s.transpose();
    let q_bar = linalg::symmetrize(&(q - s * &r_inv * s.transpose()));
    let g = linalg::symmetrize(&(b * &r_inv * b.transpose()));
    let h = linalg::block2x2(&a_bar, &(-g), &(-q_bar), &(-a_bar.transpose()));
    let w = sign_function(&h)?;
    let eye = DMatrix::<T>::identity(n, n);
    let lhs = linalg::vstack(&[
        &w.view((0, n), (n, n)).into_owned(),
        &(w.view((n, n), (n, n)) + &eye),
    ]);
    // (W + I) [I; X] = 0 on the stable subspace
    let rhs = linalg::vstack(&[
        &(-(w.view((0, 0), (n, n)) + &eye)),
        &(-w.view((n, 0), (n, n))),
    ]);
    let x = lhs
        .svd(true, true)
        .solve(&rhs, T::eps() * T::lit(1e3))
        .map_err(|e| Error::Numerical(format!("Riccati least squares: {e}")))?;
    let x = linalg::symmetrize(&x);
    let f = -(&r_inv * (b.transpose() * &x + s.transpose()));
    let abscissa = spectral_abscissa(&(a + b * &f))?;
    if !(abscissa < T::zero()) {
        return Err(Error::Numerical(format!(
            "Riccati solution is not stabilizing (closed-loop abscissa {})",
            abscissa
        )));
    }
    Ok(Lqr { x, f })
}
