//! Balanced truncation, for LTI systems and for LPV models balanced with
//! constant generalized Gramians.

use crate::analysis::{gramians, solve_lyapunov, spectral_abscissa, Gramians};
use crate::certify::MAX_VERTEX_PARAMS;
use crate::error::{Error, Result};
use crate::linalg;
use crate::lmi::{Block, Objective, Problem, Status};
use crate::model::{LpvModel, LtiStateSpace};
use crate::scalar::Scalar;
use nalgebra::DMatrix;

const NEGLIGIBLE_HANKEL: f64 = 1e-12;

/// Left/right projections of a square-root balancing, `tl * tr = I`.
#[derive(Debug, Clone)]
pub struct Balancing<T: Scalar> {
    pub tl: DMatrix<T>,
    pub tr: DMatrix<T>,
    /// Hankel singular values of the full system, descending.
    pub hankel: Vec<T>,
}

/// Square-root balancing from a pair of Gramians, keeping `n` states.
///
/// If some of the leading `n` Hankel values are negligible the projection
/// keeps fewer states and a warning is logged.
pub fn balancing<T: Scalar>(g: &Gramians<T>, n: usize) -> Result<Balancing<T>> {
    let lc = linalg::psd_factor(&g.controllability);
    let lo = linalg::psd_factor(&g.observability);
    let nx = lc.nrows();
    if n == 0 || n > nx {
        return Err(Error::InvalidArgument(format!("order {n} outside 1..={nx}")));
    }
    let svd = (lo.transpose() * &lc).svd(true, true);
    let u = svd.u.expect("left vectors requested");
    let vt = svd.v_t.expect("right vectors requested");
    let mut order: Vec<usize> = (0..nx).collect();
    let sv = &svd.singular_values;
    order.sort_by(|&i, &j| sv[j].partial_cmp(&sv[i]).unwrap_or(std::cmp::Ordering::Equal));
    let hankel: Vec<T> = order.iter().map(|&i| sv[i]).collect();
    let floor = T::lit(NEGLIGIBLE_HANKEL) * hankel[0];
    let keep = hankel[..n].iter().take_while(|&&s| s > floor && s > T::zero()).count();
    if keep < n {
        log::warn!(
            "only {keep} of the requested {n} Hankel singular values are significant; truncating to order {keep}"
        );
    }
    if keep == 0 {
        return Err(Error::Numerical("all Hankel singular values vanish".into()));
    }
    let mut tl = DMatrix::zeros(keep, nx);
    let mut tr = DMatrix::zeros(nx, keep);
    for (k, &i) in order.iter().take(keep).enumerate() {
        let w = T::one() / hankel[k].sqrt();
        tr.set_column(k, &(&lc * vt.row(i).transpose() * w));
        tl.set_row(k, &(u.column(i).transpose() * lo.transpose() * w));
    }
    Ok(Balancing { tl, tr, hankel })
}

/// Square-root balanced truncation of a stable LTI system to `n` states.
///
/// Returns the reduced system and the Hankel singular values of `sys`.
pub fn balanced_truncate<T: Scalar>(sys: &LtiStateSpace<T>, n: usize) -> Result<(LtiStateSpace<T>, Vec<T>)> {
    if sys.n_x() == 0 {
        return Err(Error::InvalidArgument("nothing to truncate in a static system".into()));
    }
    let w = gramians(sys)?;
    let bal = balancing(&w, n)?;
    let red = LtiStateSpace::new(
        &bal.tl * &sys.a * &bal.tr,
        &bal.tl * &sys.b,
        &sys.c * &bal.tr,
        sys.d.clone(),
    )?;
    Ok((red, bal.hankel))
}

fn lyapunov_blocks<T: Scalar>(systems: &[LtiStateSpace<T>], dual: bool, eps: T, t_coeff: T) -> Vec<Block<T>> {
    let n = systems[0].n_x();
    let mut blocks: Vec<Block<T>> = systems
        .iter()
        .map(|s| {
            // [[-(A^T W + W A) - eps I, C^T], [C, I]] > 0, or its dual.
            let (a, c) = if dual {
                (s.a.transpose(), s.b.transpose())
            } else {
                (s.a.clone(), s.c.clone())
            };
            let p = c.nrows();
            let mut f0 = DMatrix::identity(n + p, n + p);
            f0.view_mut((0, 0), (n, n)).fill_with_identity();
            f0.view_mut((0, 0), (n, n)).scale_mut(-eps);
            f0.view_mut((0, n), (n, p)).copy_from(&c.transpose());
            f0.view_mut((n, 0), (p, n)).copy_from(&c);
            let mut e = DMatrix::zeros(n, n + p);
            e.view_mut((0, 0), (n, n)).fill_with_identity();
            let mut u = DMatrix::zeros(n, n + p);
            u.view_mut((0, 0), (n, n)).copy_from(&a);
            Block {
                f0,
                e,
                u,
                sign: -T::one(),
                t_coeff,
            }
        })
        .collect();
    blocks.push(Block {
        f0: DMatrix::zeros(n, n),
        e: DMatrix::identity(n, n),
        u: DMatrix::identity(n, n) * T::lit(0.5),
        sign: T::one(),
        t_coeff,
    });
    blocks
}

fn worst_vertex<T: Scalar>(blocks: &[Block<T>], x: &DMatrix<T>, vertices: &[Vec<T>]) -> Vec<f64> {
    let mut worst = (T::lit(f64::INFINITY), 0);
    for (i, b) in blocks.iter().take(vertices.len()).enumerate() {
        let lam = linalg::sym_eigenvalues(&b.eval(x, T::zero()))[0];
        if lam < worst.0 {
            worst = (lam, i);
        }
    }
    vertices[worst.1].iter().map(|v| v.as_f64()).collect()
}

/// Minimum-trace `W` when `A` and the input (or output) matrix are constant:
/// the Lyapunov solution with a margin term, which every feasible `W`
/// dominates.
fn constant_gramian<T: Scalar>(s: &LtiStateSpace<T>, dual: bool, eps: T) -> Result<DMatrix<T>> {
    let n = s.n_x();
    let margin = DMatrix::identity(n, n) * (eps * T::lit(2.0));
    let w = if dual {
        solve_lyapunov(&s.a, &(&s.b * s.b.transpose() + margin))?
    } else {
        solve_lyapunov(&s.a.transpose(), &(s.c.transpose() * &s.c + margin))?
    };
    Ok(linalg::symmetrize(&w))
}

/// Minimum-trace `W` with `A_v W + W A_v^T + B_v B_v^T < 0` at every vertex
/// (`dual = true`), or the observability counterpart.
fn vertex_gramian<T: Scalar>(systems: &[LtiStateSpace<T>], vertices: &[Vec<T>], dual: bool) -> Result<DMatrix<T>> {
    let n = systems[0].n_x();
    let scale = systems
        .iter()
        .fold(T::one(), |m, s| m.max(T::one() + s.a.amax()));
    let eps = T::lit(1e-8) * scale;
    if systems.len() == 1 {
        return constant_gramian(&systems[0], dual, eps);
    }
    let io = systems.iter().fold(T::one(), |m, s| {
        m.max(T::one() + if dual { s.b.amax() } else { s.c.amax() })
    });
    let trace_bound = T::lit(1e8) * T::lit(n as f64) * io * io;
    let phase1 = Problem {
        n,
        blocks: lyapunov_blocks(systems, dual, eps, T::one()),
        objective: Objective::MinT,
        trace_bound,
        threshold: T::lit(1e-9) * io * io,
        gap_tol: T::zero(),
    };
    let sol = phase1.solve(&DMatrix::zeros(n, n))?;
    if sol.status != Status::Feasible {
        return Err(Error::Infeasible {
            vertex: worst_vertex(&phase1.blocks, &sol.x, vertices),
        });
    }
    let phase2 = Problem {
        blocks: lyapunov_blocks(systems, dual, eps, T::zero()),
        objective: Objective::MinTrace,
        gap_tol: T::lit(1e-6),
        ..phase1
    };
    let sol = phase2.solve(&sol.x)?;
    Ok(linalg::symmetrize(&sol.x))
}

/// Constant generalized Gramians satisfying the Lyapunov inequalities at
/// every vertex, each of minimum trace.
///
/// Because `A` is affine in the parameters, vertex feasibility implies
/// feasibility on the whole box.
pub fn generalized_gramians<T: Scalar>(model: &LpvModel<T>, vertices: &[Vec<T>]) -> Result<Gramians<T>> {
    if model.n_rho() > MAX_VERTEX_PARAMS {
        return Err(Error::InvalidArgument(format!(
            "generalized Gramians support at most {MAX_VERTEX_PARAMS} parameters"
        )));
    }
    if vertices.is_empty() {
        return Err(Error::InvalidArgument("empty vertex list".into()));
    }
    if model.n_x() == 0 {
        return Err(Error::InvalidArgument("static model has no Gramians".into()));
    }
    let mut systems = vertices
        .iter()
        .map(|v| model.freeze(v))
        .collect::<Result<Vec<_>>>()?;
    for (s, v) in systems.iter().zip(vertices) {
        if spectral_abscissa(&s.a)? >= T::zero() {
            return Err(Error::Infeasible {
                vertex: v.iter().map(|x| x.as_f64()).collect(),
            });
        }
    }
    let a_const = model.a.is_constant();
    let wc = if a_const && model.b.is_constant() {
        vertex_gramian(&systems[..1], &vertices[..1], true)?
    } else {
        vertex_gramian(&systems, vertices, true)?
    };
    if a_const && model.c.is_constant() {
        systems.truncate(1);
    }
    Ok(Gramians {
        controllability: wc,
        observability: vertex_gramian(&systems, &vertices[..systems.len()], false)?,
    })
}

fn project<T: Scalar>(model: &LpvModel<T>, bal: &Balancing<T>) -> LpvModel<T> {
    LpvModel::new(
        model.a.map_terms(|t| &bal.tl * t * &bal.tr),
        model.b.premul(&bal.tl),
        model.c.postmul(&bal.tr),
        model.d.clone(),
        model.params.clone(),
    )
    .expect("projection preserves dimensions")
}

/// Balances with the generalized Gramians and truncates every affine term
/// to the leading `n` states; `D` is kept.
pub fn lpv_balanced_truncate<T: Scalar>(model: &LpvModel<T>, n: usize, vertices: &[Vec<T>]) -> Result<LpvModel<T>> {
    let w = generalized_gramians(model, vertices)?;
    Ok(project(model, &balancing(&w, n)?))
}

/// Balances with the ordinary Gramians of the model frozen at `rho` and
/// applies that projection to every affine term.
pub fn frozen_balanced_truncate<T: Scalar>(model: &LpvModel<T>, n: usize, rho: &[T]) -> Result<LpvModel<T>> {
    let w = gramians(&model.freeze(rho)?)?;
    Ok(project(model, &balancing(&w, n)?))
}
