//! Random test systems shared by unit, integration and acceptance tests.

use crate::model::{AffineMatrix, LpvModel, LtiStateSpace, ParameterBox};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp()
}

pub fn randn<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Random stable system of order `n` with poles of magnitude in
/// `[0.1, 10]` rad/s and damping ratio at least 0.1, hidden behind a
/// well-conditioned similarity transform.
pub fn random_stable<R: Rng>(rng: &mut R, n: usize, n_u: usize, n_y: usize) -> LtiStateSpace<f64> {
    let mut lam = DMatrix::zeros(n, n);
    let mut i = 0;
    while i < n {
        if i + 1 < n && rng.random_bool(0.5) {
            let wn = log_uniform(rng, 0.1, 10.0);
            let zeta = 0.1 + 0.8 * rng.random::<f64>();
            let re = -zeta * wn;
            let im = wn * (1.0 - zeta * zeta).sqrt();
            lam[(i, i)] = re;
            lam[(i + 1, i + 1)] = re;
            lam[(i, i + 1)] = im;
            lam[(i + 1, i)] = -im;
            i += 2;
        } else {
            lam[(i, i)] = -log_uniform(rng, 0.1, 10.0);
            i += 1;
        }
    }
    let q = randn(rng, n, n).qr().q();
    let scale = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(n, |_, _| {
        log_uniform(rng, 0.5, 2.0)
    }));
    let v = &q * &scale;
    let v_inv = v.clone().try_inverse().expect("invertible similarity");
    let a = &v * lam * v_inv;
    let d = if rng.random_bool(0.5) {
        randn(rng, n_y, n_u) * 0.5
    } else {
        DMatrix::zeros(n_y, n_u)
    };
    LtiStateSpace::new(a, randn(rng, n, n_u), randn(rng, n_y, n), d).expect("consistent dims")
}

/// Random LPV model on the unit box with `A(rho) = S - P + sum rho_i A_i`,
/// `S` skew, `P >= I` and `sum ||A_i||_F <= 0.4`, so `X = I` proves
/// quadratic stability. `D` is zero.
pub fn random_quadratically_stable<R: Rng>(
    rng: &mut R,
    n: usize,
    n_u: usize,
    n_y: usize,
    n_rho: usize,
) -> LpvModel<f64> {
    let s = randn(rng, n, n);
    let l = randn(rng, n, n) * 0.5;
    let a0 = &s - s.transpose() - &l * l.transpose() - DMatrix::identity(n, n);
    let a_coeffs = (0..n_rho)
        .map(|_| {
            let c = randn(rng, n, n);
            let nrm = c.norm();
            c * (0.4 / (nrm * n_rho as f64))
        })
        .collect();
    let mut small = |r, c| {
        AffineMatrix::new(randn(rng, r, c), (0..n_rho).map(|_| randn(rng, r, c) * 0.3).collect())
            .expect("consistent terms")
    };
    let b = small(n, n_u);
    let c = small(n_y, n);
    LpvModel::new(
        AffineMatrix::new(a0, a_coeffs).expect("consistent terms"),
        b,
        c,
        AffineMatrix::zeros(n_y, n_u, n_rho),
        ParameterBox::unit(n_rho),
    )
    .expect("consistent dims")
}
