//! Induced-L2 gain certificates from the bounded real lemma with a common
//! Lyapunov matrix imposed at the vertices of the parameter box.
//!
//! The LMI
//!
//! ```text
//! [ A^T X + X A   X B    C^T ]
//! [ B^T X        -g I    D^T ]  < 0
//! [ C             D     -g I ]
//! ```
//!
//! is affine in `(A, B, C, D)`, so for affine models vertex feasibility
//! covers the whole box.

use crate::analysis::grid_worst_hinf;
use crate::error::{Error, Result};
use crate::linalg;
use crate::lmi::{Block, Objective, Problem, Status};
use crate::model::{LpvModel, LtiStateSpace};
use crate::scalar::Scalar;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LmiStatus {
    Feasible,
    Infeasible,
    /// The solver could neither certify nor refute; treated as infeasible.
    Indeterminate,
}

#[derive(Debug, Clone)]
pub struct LmiFeasibilityResult<T: Scalar> {
    pub feasible: bool,
    pub status: LmiStatus,
    pub x: Option<DMatrix<T>>,
    /// Smallest eigenvalue over the vertices of the negated LMI.
    pub margin: T,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct Certificate<T: Scalar> {
    pub certified_bound: T,
    pub grid_lower_bound: T,
    pub margin: T,
    pub bisection_steps: usize,
    /// Every tested level with its outcome, in test order.
    pub trace: Vec<(T, LmiStatus)>,
    pub x: DMatrix<T>,
}

impl<T: Scalar> Certificate<T> {
    /// No feasible level lies below an infeasible one.
    pub fn is_monotone(&self) -> bool {
        self.trace.iter().all(|&(g, s)| {
            s != LmiStatus::Feasible
                || self
                    .trace
                    .iter()
                    .all(|&(g2, s2)| !(g2 > g && s2 == LmiStatus::Infeasible))
        })
    }
}

pub(crate) const MAX_VERTEX_PARAMS: usize = 12;

fn check_vertices<T: Scalar>(err: &LpvModel<T>, vertices: &[Vec<T>]) -> Result<Vec<LtiStateSpace<T>>> {
    if err.n_rho() > MAX_VERTEX_PARAMS {
        return Err(Error::InvalidArgument(format!(
            "vertex certification supports at most {MAX_VERTEX_PARAMS} parameters"
        )));
    }
    if vertices.is_empty() {
        return Err(Error::InvalidArgument("empty vertex list".into()));
    }
    vertices.iter().map(|v| err.freeze(v)).collect()
}

/// `F_v(X)` at one vertex.
pub fn brl_matrix<T: Scalar>(sys: &LtiStateSpace<T>, gamma: T, x: &DMatrix<T>) -> DMatrix<T> {
    let (n, m, p) = (sys.n_x(), sys.n_u(), sys.n_y());
    let mut f = DMatrix::zeros(n + m + p, n + m + p);
    let xa = x * &sys.a;
    f.view_mut((0, 0), (n, n)).copy_from(&(&xa + xa.transpose()));
    let xb = x * &sys.b;
    f.view_mut((0, n), (n, m)).copy_from(&xb);
    f.view_mut((n, 0), (m, n)).copy_from(&xb.transpose());
    f.view_mut((0, n + m), (n, p)).copy_from(&sys.c.transpose());
    f.view_mut((n + m, 0), (p, n)).copy_from(&sys.c);
    f.view_mut((n, n + m), (m, p)).copy_from(&sys.d.transpose());
    f.view_mut((n + m, n), (p, m)).copy_from(&sys.d);
    for i in n..n + m + p {
        f[(i, i)] = -gamma;
    }
    f
}

/// `min_v lambda_min(-F_v(X))`.
pub fn brl_margin<T: Scalar>(systems: &[LtiStateSpace<T>], gamma: T, x: &DMatrix<T>) -> T {
    systems
        .iter()
        .map(|s| {
            let f = -brl_matrix(s, gamma, x);
            linalg::sym_eigenvalues(&f)[0]
        })
        .fold(T::lit(f64::INFINITY), |a, b| a.min(b))
}

fn brl_problem<T: Scalar>(systems: &[LtiStateSpace<T>], gamma: T) -> Problem<T> {
    let n = systems[0].n_x();
    let mut blocks = Vec::with_capacity(systems.len() + 1);
    for s in systems {
        let (m, p) = (s.n_u(), s.n_y());
        let b = n + m + p;
        let zero = DMatrix::zeros(n, n);
        let mut e = DMatrix::zeros(n, b);
        e.view_mut((0, 0), (n, n)).fill_with_identity();
        let u = linalg::hstack(&[&s.a, &s.b, &DMatrix::zeros(n, p)]);
        // t I - F_v(X) > 0
        blocks.push(Block {
            f0: -brl_matrix(s, gamma, &zero),
            e,
            u,
            sign: -T::one(),
            t_coeff: T::one(),
        });
    }
    if n > 0 {
        blocks.push(Block {
            f0: DMatrix::zeros(n, n),
            e: DMatrix::identity(n, n),
            u: DMatrix::identity(n, n) * T::lit(0.5),
            sign: T::one(),
            t_coeff: T::one(),
        });
    }
    let scale = T::one() + gamma;
    Problem {
        n,
        blocks,
        objective: Objective::MinT,
        trace_bound: T::lit(1e8) * T::lit(n.max(1) as f64) * scale,
        threshold: T::lit(1e-9) * scale,
        gap_tol: T::zero(),
    }
}

fn feasibility<T: Scalar>(
    systems: &[LtiStateSpace<T>],
    gamma: T,
    x0: Option<&DMatrix<T>>,
) -> Result<LmiFeasibilityResult<T>> {
    let n = systems[0].n_x();
    let problem = brl_problem(systems, gamma);
    let start = x0.cloned().unwrap_or_else(|| DMatrix::zeros(n, n));
    let sol = match problem.solve(&start) {
        Ok(s) => s,
        Err(Error::Numerical(msg)) => {
            log::debug!("brl solve at gamma = {}: {msg}", gamma.as_f64());
            return Ok(LmiFeasibilityResult {
                feasible: false,
                status: LmiStatus::Indeterminate,
                x: None,
                margin: T::zero(),
                iterations: 0,
            });
        }
        Err(e) => return Err(e),
    };
    let margin = brl_margin(systems, gamma, &sol.x);
    let x_pd = n == 0 || linalg::sym_eigenvalues(&sol.x)[0] > T::zero();
    let status = match sol.status {
        Status::Feasible if margin > T::zero() && x_pd => LmiStatus::Feasible,
        Status::Infeasible => LmiStatus::Infeasible,
        _ => LmiStatus::Indeterminate,
    };
    let feasible = status == LmiStatus::Feasible;
    Ok(LmiFeasibilityResult {
        feasible,
        status,
        x: feasible.then_some(sol.x),
        margin,
        iterations: sol.iterations,
    })
}

/// Searches for a common `X > 0` satisfying the bounded-real LMI at level
/// `gamma` at every vertex.
pub fn brl_feasible<T: Scalar>(
    err: &LpvModel<T>,
    gamma: T,
    vertices: &[Vec<T>],
) -> Result<LmiFeasibilityResult<T>> {
    if !(gamma > T::zero()) {
        return Err(Error::InvalidArgument(format!("gamma must be positive, got {gamma}")));
    }
    let systems = check_vertices(err, vertices)?;
    feasibility(&systems, gamma, None)
}

/// Orthonormal basis of the smallest subspace containing `range(seed)` and
/// invariant under every matrix in `maps`.
fn invariant_span<T: Scalar>(seed: &DMatrix<T>, maps: &[&DMatrix<T>], tol: T) -> DMatrix<T> {
    let n = seed.nrows();
    let orth = |m: &DMatrix<T>| -> DMatrix<T> {
        if m.ncols() == 0 || n == 0 {
            return DMatrix::zeros(n, 0);
        }
        let svd = m.clone().svd(true, false);
        let u = svd.u.expect("left vectors requested");
        let keep: Vec<usize> = (0..svd.singular_values.len())
            .filter(|&i| svd.singular_values[i] > tol)
            .collect();
        DMatrix::from_fn(n, keep.len(), |i, j| u[(i, keep[j])])
    };
    let mut basis = orth(seed);
    loop {
        let mut cols = vec![basis.clone()];
        cols.extend(maps.iter().map(|a| *a * &basis));
        let next = orth(&linalg::hstack(&cols.iter().collect::<Vec<_>>()));
        if next.ncols() == basis.ncols() {
            return basis;
        }
        basis = next;
    }
}

/// Removes the states that are unreachable or unobservable for every
/// parameter value. The input-output map is unchanged for arbitrary
/// parameter trajectories because the discarded subspaces are invariant
/// under all affine terms.
pub fn structural_minimal<T: Scalar>(m: &LpvModel<T>) -> LpvModel<T> {
    let scale = m
        .a
        .terms()
        .chain(m.b.terms())
        .chain(m.c.terms())
        .fold(T::one(), |s, t| s.max(t.amax()));
    let tol = T::lit(1e-10) * scale;
    let a_terms: Vec<&DMatrix<T>> = m.a.terms().collect();
    let b_all = linalg::hstack(&m.b.terms().collect::<Vec<_>>());
    let vc = invariant_span(&b_all, &a_terms, tol);
    let project = |mdl: &LpvModel<T>, left: &DMatrix<T>, right: &DMatrix<T>| {
        LpvModel::new(
            mdl.a.map_terms(|t| left * t * right),
            mdl.b.map_terms(|t| left * t),
            mdl.c.map_terms(|t| t * right),
            mdl.d.clone(),
            mdl.params.clone(),
        )
        .expect("projection preserves dimensions")
    };
    let reach = project(m, &vc.transpose(), &vc);
    let at_terms: Vec<DMatrix<T>> = reach.a.terms().map(|t| t.transpose()).collect();
    let c_all = linalg::hstack(&reach.c.terms().map(|t| t.transpose()).collect::<Vec<_>>().iter().collect::<Vec<_>>());
    let wo = invariant_span(&c_all, &at_terms.iter().collect::<Vec<_>>(), tol);
    project(&reach, &wo.transpose(), &wo)
}

/// Certified induced-L2 bound, bisecting from the frozen-grid lower bound
/// over the box grid with 5 points per parameter.
pub fn certify_bound<T: Scalar>(err: &LpvModel<T>, rel_tol: T, vertices: &[Vec<T>]) -> Result<Certificate<T>> {
    let mut grid = err.params.grid(5);
    grid.extend(vertices.iter().cloned());
    let lower = grid_worst_hinf(err, &grid, T::lit(1e-6).min(rel_tol))?.gamma;
    certify_bound_from(err, rel_tol, vertices, lower)
}

/// As [`certify_bound`], with the lower bound supplied by the caller.
pub fn certify_bound_from<T: Scalar>(
    err: &LpvModel<T>,
    rel_tol: T,
    vertices: &[Vec<T>],
    lower: T,
) -> Result<Certificate<T>> {
    if !(rel_tol > T::zero() && rel_tol < T::one()) {
        return Err(Error::InvalidArgument(format!("rel_tol must lie in (0, 1), got {rel_tol}")));
    }
    check_vertices(err, vertices)?;
    let reduced = structural_minimal(err);
    if reduced.n_x() < err.n_x() {
        log::debug!(
            "certifying a {}-state minimal realization of the {}-state system",
            reduced.n_x(),
            err.n_x()
        );
    }
    let systems = check_vertices(&reduced, vertices)?;
    let io_scale = systems.iter().fold(T::one(), |m, s| {
        m.max(T::one() + linalg::sigma_max(&s.b) * linalg::sigma_max(&s.c) + linalg::sigma_max(&s.d))
    });
    let lo = lower.max(T::lit(1e-8) * io_scale);

    let mut trace = Vec::new();
    let mut best: Option<(T, LmiFeasibilityResult<T>)> = None;
    let mut test = |gamma: T, best: &mut Option<(T, LmiFeasibilityResult<T>)>| -> Result<bool> {
        let warm = best.as_ref().and_then(|(_, r)| r.x.clone());
        let r = feasibility(&systems, gamma, warm.as_ref())?;
        log::debug!(
            "brl gamma = {:e}: {:?} (margin {:e}, {} Newton steps)",
            gamma.as_f64(),
            r.status,
            r.margin.as_f64(),
            r.iterations
        );
        trace.push((gamma, r.status));
        let ok = r.feasible;
        if ok {
            *best = Some((gamma, r));
        }
        Ok(ok)
    };

    let mut infeasible = lo;
    let first = lo * (T::one() + rel_tol * T::lit(0.5));
    if !test(first, &mut best)? {
        infeasible = first;
        let mut k = 1;
        loop {
            let hi = lo * T::lit(2f64.powi(k));
            if test(hi, &mut best)? {
                break;
            }
            infeasible = hi;
            k += 1;
            if k > 20 {
                return Err(Error::CertificationFailed {
                    cap: (lo * T::lit(2f64.powi(20))).as_f64(),
                });
            }
        }
    }
    loop {
        let hi = best.as_ref().expect("bracket has a feasible end").0;
        if hi - infeasible <= rel_tol * hi {
            break;
        }
        let mid = (hi + infeasible) * T::lit(0.5);
        if !test(mid, &mut best)? {
            infeasible = mid;
        }
    }
    let (gamma, res) = best.expect("bracket has a feasible end");
    let cert = Certificate {
        certified_bound: gamma,
        grid_lower_bound: lower,
        margin: res.margin,
        bisection_steps: trace.len(),
        trace,
        x: res.x.expect("feasible result carries X"),
    };
    if !cert.is_monotone() {
        log::warn!("bounded-real feasibility was not monotone in gamma along the bisection");
    }
    Ok(cert)
}
