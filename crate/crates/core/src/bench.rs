//! Chained mass-spring-damper benchmark with scheduled spring stiffness.
//!
//! Blocks `1..N` sit in a line. Every block is tied to the ground by spring
//! and damper `i`, and neighbours `i`, `i+1` are linked by spring and damper
//! `i+1`. Below three blocks the ground link of the last block is dropped
//! (`N = 2`), so the one- and two-block models are plain wall chains.
//! The external force acts on block `N` and the output is its displacement.
//! Spring `j` has stiffness `k0 + k_rho * rho_p` with
//! `p = (j - 1) mod n_rho`, i.e. parameters repeat every `n_rho` springs.

use crate::error::{Error, Result};
use crate::model::{AffineMatrix, LpvModel, ParameterBox};
use crate::scalar::Scalar;
use nalgebra::DMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct MsdConfig {
    pub n_blocks: usize,
    pub n_rho: usize,
    /// kg
    pub mass: f64,
    /// N s/m
    pub damping: f64,
    /// N/m
    pub k0: f64,
    /// N/m
    pub k_rho: f64,
}

impl Default for MsdConfig {
    fn default() -> Self {
        Self {
            n_blocks: 10,
            n_rho: 1,
            mass: 1.0,
            damping: 0.75,
            k0: 0.5,
            k_rho: 0.3,
        }
    }
}

impl MsdConfig {
    pub fn new(n_blocks: usize, n_rho: usize) -> Self {
        Self {
            n_blocks,
            n_rho,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.n_blocks < 1 {
            return bad("benchmark needs at least one block".into());
        }
        if self.n_rho < 1 || self.n_rho > self.n_blocks {
            return bad(format!(
                "n_rho must be in 1..={}, got {}",
                self.n_blocks, self.n_rho
            ));
        }
        for (name, v) in [("mass", self.mass), ("damping", self.damping), ("k0", self.k0)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.k_rho >= 0.0 && self.k_rho < self.k0) {
            return bad(format!(
                "k_rho must satisfy 0 <= k_rho < k0 (got {} vs {})",
                self.k_rho, self.k0
            ));
        }
        Ok(())
    }

    /// Scheduling parameter driving spring `j` (1-based).
    pub fn spring_parameter(&self, j: usize) -> usize {
        (j - 1) % self.n_rho
    }
}

/// Links of spring `j` (1-based): the ground link of block `j` when
/// `grounded`, and the coupling between blocks `j-1` and `j` for `j >= 2`.
fn add_spring<T: Scalar>(m: &mut DMatrix<T>, j: usize, grounded: bool, value: T) {
    let i = j - 1;
    if grounded {
        m[(i, i)] += value;
    }
    if j >= 2 {
        m[(i, i)] += value;
        m[(i - 1, i - 1)] += value;
        m[(i - 1, i)] -= value;
        m[(i, i - 1)] -= value;
    }
}

pub fn build_msd<T: Scalar>(cfg: &MsdConfig) -> Result<LpvModel<T>> {
    cfg.validate()?;
    let n = cfg.n_blocks;
    let inv_m = T::lit(1.0 / cfg.mass);

    let mut stiff0 = DMatrix::<T>::zeros(n, n);
    let mut stiff_p = vec![DMatrix::<T>::zeros(n, n); cfg.n_rho];
    let mut damp = DMatrix::<T>::zeros(n, n);
    for j in 1..=n {
        let grounded = j == 1 || n >= 3;
        add_spring(&mut stiff0, j, grounded, T::lit(cfg.k0));
        add_spring(&mut stiff_p[cfg.spring_parameter(j)], j, grounded, T::lit(cfg.k_rho));
        add_spring(&mut damp, j, grounded, T::lit(cfg.damping));
    }

    let assemble = |stiff: &DMatrix<T>, with_dynamics: bool| {
        let mut a = DMatrix::<T>::zeros(2 * n, 2 * n);
        if with_dynamics {
            a.view_mut((0, n), (n, n)).fill_with_identity();
            a.view_mut((n, n), (n, n)).copy_from(&(&damp * -inv_m));
        }
        a.view_mut((n, 0), (n, n)).copy_from(&(stiff * -inv_m));
        a
    };
    let a = AffineMatrix::new(
        assemble(&stiff0, true),
        stiff_p.iter().map(|s| assemble(s, false)).collect(),
    )?;

    let mut b = DMatrix::<T>::zeros(2 * n, 1);
    b[(2 * n - 1, 0)] = inv_m;
    let mut c = DMatrix::<T>::zeros(1, 2 * n);
    c[(0, n - 1)] = T::one();

    LpvModel::new(
        a,
        AffineMatrix::from_constant(b, cfg.n_rho),
        AffineMatrix::from_constant(c, cfg.n_rho),
        AffineMatrix::zeros(1, 1, cfg.n_rho),
        ParameterBox::unit(cfg.n_rho),
    )
}
