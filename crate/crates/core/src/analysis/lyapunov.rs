//! Continuous-time Lyapunov equations via the complex Schur form.

use super::eig::spectral_abscissa;
use crate::error::{Error, Result};
use crate::linalg::{self, symmetrize};
use crate::model::LtiStateSpace;
use crate::scalar::Scalar;
use nalgebra::{Complex, DMatrix, Schur};

/// Solves `A X + X A^T + Q = 0` for Hurwitz `A`.
///
/// Bartels-Stewart on the complex Schur form `A = U T U^H`: the transformed
/// equation `T Y + Y T^H = -U^H Q U` is solved column by column from the
/// last one, each column being an upper-triangular solve.
pub fn solve_lyapunov<T: Scalar>(a: &DMatrix<T>, q: &DMatrix<T>) -> Result<DMatrix<T>> {
    let n = a.nrows();
    if a.ncols() != n || q.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "Lyapunov: A {:?}, Q {:?}",
            a.shape(),
            q.shape()
        )));
    }
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let alpha = spectral_abscissa(a)?;
    if alpha >= T::zero() {
        return Err(Error::Unstable {
            abscissa: alpha.as_f64(),
            rho: None,
        });
    }
    let ac = linalg::to_complex(a);
    let (u, t) = Schur::try_new(ac, T::eps(), 200 * n.max(10))
        .ok_or_else(|| Error::Numerical("complex Schur did not converge".into()))?
        .unpack();
    let uh = u.adjoint();
    let qt = &uh * linalg::to_complex(q) * &u;

    let mut y = DMatrix::<Complex<T>>::zeros(n, n);
    for j in (0..n).rev() {
        let mut rhs = -qt.column(j).into_owned();
        for k in (j + 1)..n {
            let c = t[(j, k)].conj();
            if c != Complex::new(T::zero(), T::zero()) {
                rhs -= y.column(k) * c;
            }
        }
        let mut m = t.clone();
        let shift = t[(j, j)].conj();
        for i in 0..n {
            m[(i, i)] += shift;
        }
        // only the leading (j+1..n) part is needed but the full triangle is cheap
        let col = m
            .solve_upper_triangular(&rhs)
            .ok_or_else(|| Error::Numerical("singular Lyapunov operator".into()))?;
        y.set_column(j, &col);
    }
    let x = (&u * y * &uh).map(|z| z.re);
    let x = symmetrize(&x);

    let res = lyapunov_residual(a, &x, q);
    let scale = a.norm() * x.norm() + q.norm();
    if res > T::lit(1e-10) * scale {
        log::warn!(
            "Lyapunov solve ill-conditioned: residual {:e} vs scale {:e}",
            res.as_f64(),
            scale.as_f64()
        );
    }
    Ok(x)
}

/// Frobenius norm of `A X + X A^T + Q`.
pub fn lyapunov_residual<T: Scalar>(a: &DMatrix<T>, x: &DMatrix<T>, q: &DMatrix<T>) -> T {
    (a * x + x * a.transpose() + q).norm()
}

#[derive(Debug, Clone)]
pub struct Gramians<T: Scalar> {
    pub controllability: DMatrix<T>,
    pub observability: DMatrix<T>,
}

/// Controllability and observability Gramians of a stable system.
pub fn gramians<T: Scalar>(sys: &LtiStateSpace<T>) -> Result<Gramians<T>> {
    let wc = solve_lyapunov(&sys.a, &(&sys.b * sys.b.transpose()))?;
    let wo = solve_lyapunov(&sys.a.transpose(), &(sys.c.transpose() * &sys.c))?;
    Ok(Gramians {
        controllability: wc,
        observability: wo,
    })
}
