//! Upper-LFT representation `F_u(M, Delta)` with `Delta = diag(delta_i I_{r_i})`.

use super::{LpvModel, LtiStateSpace, ParameterBox};
use crate::error::{Error, Result};
use crate::linalg;
use crate::scalar::Scalar;
use nalgebra::DMatrix;

/// Relative singular-value cutoff used when factoring coefficient blocks.
const RANK_TOL: f64 = 1e-10;

/// Constant-matrix realization closed by the normalized parameter block.
///
/// ```text
/// [xdot]   [A    B_w   B_u ] [x]
/// [ v  ] = [C_v  D_vw  D_vu] [w],   w = Delta v
/// [ y  ]   [C_y  D_yw  D_yu] [u]
/// ```
///
/// `Delta` is built from the normalized scheduling vector
/// `delta = params.normalize(rho)`, so `||Delta|| <= 1` on the box.
#[derive(Debug, Clone, PartialEq)]
pub struct LftModel<T: Scalar> {
    pub a: DMatrix<T>,
    pub b_w: DMatrix<T>,
    pub b_u: DMatrix<T>,
    pub c_v: DMatrix<T>,
    pub d_vw: DMatrix<T>,
    pub d_vu: DMatrix<T>,
    pub c_y: DMatrix<T>,
    pub d_yw: DMatrix<T>,
    pub d_yu: DMatrix<T>,
    /// `(parameter index, repetition count)` in block order.
    pub delta_structure: Vec<(usize, usize)>,
    /// Physical box the normalization was taken from.
    pub params: ParameterBox<T>,
}

impl<T: Scalar> LftModel<T> {
    /// Size of the `Delta` block.
    pub fn q(&self) -> usize {
        self.delta_structure.iter().map(|&(_, r)| r).sum()
    }

    pub fn normalize(&self, rho: &[T]) -> Vec<T> {
        self.params.normalize(rho)
    }

    /// `diag(delta_i I_{r_i})` as a dense matrix.
    pub fn delta_matrix(&self, delta: &[T]) -> DMatrix<T> {
        let q = self.q();
        let mut m = DMatrix::zeros(q, q);
        let mut k = 0;
        for &(i, r) in &self.delta_structure {
            for _ in 0..r {
                m[(k, k)] = delta[i];
                k += 1;
            }
        }
        m
    }

    /// Closes the `Delta` loop at normalized `delta` (each entry in `[-1, 1]`).
    pub fn eval(&self, delta: &[T]) -> Result<LtiStateSpace<T>> {
        if delta.len() != self.params.n_rho() {
            return Err(Error::Dimension(format!(
                "delta has length {}, expected {}",
                delta.len(),
                self.params.n_rho()
            )));
        }
        let slack = T::lit(1e-12);
        for (i, &d) in delta.iter().enumerate() {
            if !(d.abs() <= T::one() + slack) {
                return Err(Error::OutOfRange {
                    index: i,
                    value: d.as_f64(),
                    lo: -1.0,
                    hi: 1.0,
                });
            }
        }
        if self.q() == 0 {
            return LtiStateSpace::new(
                self.a.clone(),
                self.b_u.clone(),
                self.c_y.clone(),
                self.d_yu.clone(),
            );
        }
        let q = self.q();
        let dm = self.delta_matrix(delta);
        // w = Delta (I - D_vw Delta)^{-1} (C_v x + D_vu u)
        let loop_mat = DMatrix::<T>::identity(q, q) - &self.d_vw * &dm;
        let tol = T::lit(1e-13) * (T::one() + linalg::sigma_max(&self.d_vw));
        let sv = loop_mat.singular_values();
        if sv.min() <= tol {
            return Err(Error::IllPosed {
                delta: delta.iter().map(|d| d.as_f64()).collect(),
            });
        }
        let inv = loop_mat
            .try_inverse()
            .ok_or_else(|| Error::IllPosed {
                delta: delta.iter().map(|d| d.as_f64()).collect(),
            })?;
        let gain = &dm * inv;
        let kv = &gain * &self.c_v;
        let ku = &gain * &self.d_vu;
        LtiStateSpace::new(
            &self.a + &self.b_w * &kv,
            &self.b_u + &self.b_w * &ku,
            &self.c_y + &self.d_yw * &kv,
            &self.d_yu + &self.d_yw * &ku,
        )
    }

    /// Convenience: normalize physical `rho`, then evaluate.
    pub fn eval_physical(&self, rho: &[T]) -> Result<LtiStateSpace<T>> {
        self.params.check(rho)?;
        self.eval(&self.normalize(rho))
    }
}

impl<T: Scalar> LpvModel<T> {
    /// Pulls the affine parameter dependence into a `Delta` block.
    ///
    /// Each normalized coefficient block `h_i [A_i B_i; C_i D_i]` is factored
    /// by SVD as `L_i R_i` with rank `r_i`; parameter `i` is repeated `r_i`
    /// times. The resulting LFT has `D_vw = 0`.
    pub fn to_lft(&self) -> LftModel<T> {
        let (nx, nu, ny) = (self.n_x(), self.n_u(), self.n_y());
        let center = self.params.center();
        // constant part at the box center
        let at_center = self.freeze_unchecked(&center);
        let mut lefts: Vec<DMatrix<T>> = Vec::new();
        let mut rights: Vec<DMatrix<T>> = Vec::new();
        let mut structure = Vec::new();
        for (i, &(lo, hi)) in self.params.bounds().iter().enumerate() {
            let half = (hi - lo) * T::lit(0.5);
            let stacked = linalg::block2x2(
                &self.a.coeffs()[i],
                &self.b.coeffs()[i],
                &self.c.coeffs()[i],
                &self.d.coeffs()[i],
            ) * half;
            let svd = stacked.clone().svd(true, true);
            let smax = svd.singular_values.max();
            if smax <= T::zero() {
                continue;
            }
            let cutoff = T::lit(RANK_TOL) * smax;
            let u = svd.u.as_ref().expect("svd u");
            let vt = svd.v_t.as_ref().expect("svd v_t");
            let keep: Vec<usize> = (0..svd.singular_values.len())
                .filter(|&k| svd.singular_values[k] > cutoff)
                .collect();
            let r = keep.len();
            let mut l = DMatrix::zeros(nx + ny, r);
            let mut rm = DMatrix::zeros(r, nx + nu);
            for (col, &k) in keep.iter().enumerate() {
                let s = svd.singular_values[k].sqrt();
                l.set_column(col, &(u.column(k) * s));
                rm.set_row(col, &(vt.row(k) * s));
            }
            lefts.push(l);
            rights.push(rm);
            structure.push((i, r));
        }
        let q: usize = structure.iter().map(|&(_, r)| r).sum();
        let left = if q == 0 {
            DMatrix::zeros(nx + ny, 0)
        } else {
            linalg::hstack(&lefts.iter().collect::<Vec<_>>())
        };
        let right = if q == 0 {
            DMatrix::zeros(0, nx + nu)
        } else {
            linalg::vstack(&rights.iter().collect::<Vec<_>>())
        };
        LftModel {
            a: at_center.a,
            b_w: left.rows(0, nx).into_owned(),
            b_u: at_center.b,
            c_v: right.columns(0, nx).into_owned(),
            d_vw: DMatrix::zeros(q, q),
            d_vu: right.columns(nx, nu).into_owned(),
            c_y: at_center.c,
            d_yw: left.rows(nx, ny).into_owned(),
            d_yu: at_center.d,
            delta_structure: structure,
            params: self.params.clone(),
        }
    }
}
