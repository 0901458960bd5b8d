use super::hinf::hinf_norm;
use crate::error::{Error, Result};
use crate::model::LpvModel;
use crate::scalar::Scalar;
use rayon::prelude::*;

#[derive(Debug, Clone, PartialEq)]
pub struct GridWorst<T: Scalar> {
    pub gamma: T,
    pub active_rho: Vec<T>,
    pub active_freq: T,
    /// Index of `active_rho` in the evaluated grid.
    pub active_index: usize,
}

/// Largest frozen H-infinity norm over `grid`; ties go to the first index.
pub fn grid_worst_hinf<T: Scalar>(
    err: &LpvModel<T>,
    grid: &[Vec<T>],
    rel_tol: T,
) -> Result<GridWorst<T>> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty evaluation grid".into()));
    }
    let norms: Vec<Result<_>> = grid
        .par_iter()
        .map(|rho| {
            let sys = err.freeze(rho)?;
            hinf_norm(&sys, rel_tol).map_err(|e| match e {
                Error::Unstable { abscissa, .. } => Error::Unstable {
                    abscissa,
                    rho: Some(rho.iter().map(|r| r.as_f64()).collect()),
                },
                other => other,
            })
        })
        .collect();
    let mut best: Option<GridWorst<T>> = None;
    for (i, r) in norms.into_iter().enumerate() {
        let h = r?;
        if best.as_ref().is_none_or(|b| h.gamma > b.gamma) {
            best = Some(GridWorst {
                gamma: h.gamma,
                active_rho: grid[i].clone(),
                active_freq: h.peak_frequency,
                active_index: i,
            });
        }
    }
    Ok(best.expect("nonempty grid"))
}
