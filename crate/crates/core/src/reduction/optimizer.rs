//! Descent on the grid worst-case objective: steepest descent direction of
//! the epsilon-active set (minimum-norm element of the convex hull of the
//! active subgradients) with Armijo backtracking, run from several starts.

use super::mask::Which;
use super::objective::{Evaluation, SynthesisObjective};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use std::collections::HashMap;

const ARMIJO_C1: f64 = 1e-4;
const MIN_REL_STEP: f64 = 1e-12;
const MAX_ACTIVE: usize = 6;
const EPS_ACTIVE: [f64; 3] = [1e-3, 1e-2, 1e-1];
const PERTURBATION: f64 = 0.1;
const MAX_SHRINK: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchOptions {
    pub max_iterations: usize,
    pub step_tolerance: f64,
    pub multistart: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StartSummary {
    pub index: usize,
    pub initial_value: f64,
    pub final_value: f64,
    pub iterations: usize,
    pub stable: bool,
}

#[derive(Debug, Clone)]
pub struct StartResult<T: Scalar> {
    pub theta: DVector<T>,
    pub eval: Evaluation<T>,
    pub iterations: usize,
    /// Objective after every accepted step, starting with the initial value.
    pub history: Vec<T>,
    pub initial_value: T,
}

/// Minimum-norm point of the convex hull of `g`, by enumerating the
/// supports of the (small) simplex-constrained least-squares problem.
pub fn min_norm_hull<T: Scalar>(g: &[DVector<T>]) -> DVector<T> {
    let m = g.len();
    assert!(m > 0, "empty subgradient set");
    if m == 1 {
        return g[0].clone();
    }
    let gram = DMatrix::from_fn(m, m, |i, j| g[i].dot(&g[j]));
    let scale = (0..m).fold(T::zero(), |s, i| s.max(gram[(i, i)]));
    let tol = T::lit(1e-12) * (T::one() + scale);
    let mut best: Option<(T, DVector<T>)> = None;
    for support in 1u32..(1 << m) {
        let idx: Vec<usize> = (0..m).filter(|&i| support >> i & 1 == 1).collect();
        let k = idx.len();
        let mut kkt = DMatrix::zeros(k + 1, k + 1);
        let mut rhs = DVector::zeros(k + 1);
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                kkt[(a, b)] = gram[(i, j)];
            }
            kkt[(a, k)] = T::one();
            kkt[(k, a)] = T::one();
        }
        rhs[k] = T::one();
        let sol = match kkt.lu().solve(&rhs) {
            Some(s) if s.iter().all(|x| x.is_finite()) => s,
            _ => continue,
        };
        if (0..k).any(|a| sol[a] < -tol) {
            continue;
        }
        let mut lam = DVector::zeros(m);
        for (a, &i) in idx.iter().enumerate() {
            lam[i] = sol[a].max(T::zero());
        }
        let total = lam.sum();
        lam /= total;
        let gl = &gram * &lam;
        let nn = lam.dot(&gl);
        if (0..m).any(|j| gl[j] < nn - tol) {
            continue;
        }
        if best.as_ref().is_none_or(|(b, _)| nn < *b) {
            best = Some((nn, lam));
        }
    }
    let lam = match best {
        Some((_, l)) => l,
        None => {
            let i = (0..m)
                .min_by(|&a, &b| gram[(a, a)].partial_cmp(&gram[(b, b)]).unwrap_or(std::cmp::Ordering::Equal))
                .expect("nonempty");
            let mut l = DVector::zeros(m);
            l[i] = T::one();
            l
        }
    };
    let mut out = DVector::zeros(g[0].len());
    for (gi, &li) in g.iter().zip(lam.iter()) {
        out.axpy(li, gi, T::one());
    }
    out
}

fn active_set<T: Scalar>(e: &Evaluation<T>, eps: T) -> Vec<usize> {
    let floor = e.value - eps * e.value.abs();
    let mut idx: Vec<usize> = (0..e.points.len())
        .filter(|&i| e.points[i].gamma >= floor)
        .collect();
    idx.sort_by(|&a, &b| {
        e.points[b]
            .gamma
            .partial_cmp(&e.points[a].gamma)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    idx.truncate(MAX_ACTIVE);
    idx
}

/// Descent from `theta0`; stops on `max_iterations`, a step or decrease
/// below `step_tolerance` (relative), or when no active-set size yields an
/// Armijo step.
pub fn descend<T: Scalar>(obj: &SynthesisObjective<T>, theta0: DVector<T>, opts: &SearchOptions) -> Result<StartResult<T>> {
    let mut theta = theta0;
    let mut eval = obj.evaluate(&theta);
    let initial_value = eval.value;
    let mut history = vec![eval.value];
    let mut iterations = 0;
    let mut alpha_prev = T::lit(0.5);
    let tol = T::lit(opts.step_tolerance);
    if !eval.is_stable() {
        return Ok(StartResult {
            theta,
            eval,
            iterations,
            history,
            initial_value,
        });
    }
    'outer: while iterations < opts.max_iterations {
        let f = eval.value;
        let theta_norm = theta.norm();
        let mut step = None;
        for &eps in &EPS_ACTIVE {
            let mut grads = Vec::new();
            for i in active_set(&eval, T::lit(eps)) {
                grads.push(obj.subgradient(&theta, i, eval.points[i].omega)?.grad);
            }
            let d = -min_norm_hull(&grads);
            let dn2 = d.norm_squared();
            if dn2.sqrt() <= T::lit(MIN_REL_STEP) * (T::one() + f) {
                break 'outer;
            }
            let mut alpha = alpha_prev * T::lit(2.0);
            while alpha * dn2.sqrt() > T::lit(MIN_REL_STEP) * (T::one() + theta_norm) {
                let cand = &theta + &d * alpha;
                let ce = obj.evaluate(&cand);
                if ce.value <= f - T::lit(ARMIJO_C1) * alpha * dn2 {
                    step = Some((cand, ce, alpha, alpha * dn2.sqrt()));
                    break;
                }
                alpha *= T::lit(0.5);
            }
            if step.is_some() {
                break;
            }
        }
        let Some((cand, ce, alpha, len)) = step else {
            break;
        };
        iterations += 1;
        let decrease = f - ce.value;
        theta = cand;
        eval = ce;
        history.push(eval.value);
        alpha_prev = alpha;
        if len <= tol * (T::one() + theta_norm) || decrease <= tol * f.abs() {
            break;
        }
    }
    Ok(StartResult {
        theta,
        eval,
        iterations,
        history,
        initial_value,
    })
}

/// Per (matrix, term) magnitude of the free entries, used to scale the
/// multistart perturbations.
fn coefficient_scales<T: Scalar>(obj: &SynthesisObjective<T>, theta: &DVector<T>) -> DVector<T> {
    let slots = obj.param().slots();
    let key = |w: Which, t: usize| (w as usize, t);
    let mut scale: HashMap<(usize, usize), T> = HashMap::new();
    for (s, &v) in slots.iter().zip(theta.iter()) {
        let e = scale.entry(key(s.which, s.term)).or_insert(T::zero());
        *e = e.max(v.abs());
    }
    let global = theta.amax();
    let floor = T::lit(1e-3) * if global > T::zero() { global } else { T::one() };
    DVector::from_iterator(
        slots.len(),
        slots.iter().map(|s| scale[&key(s.which, s.term)].max(floor)),
    )
}

fn perturbed_start<T: Scalar>(obj: &SynthesisObjective<T>, theta0: &DVector<T>, index: usize, seed: u64) -> DVector<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(index as u64));
    let sigma = coefficient_scales(obj, theta0) * T::lit(PERTURBATION);
    let noise = DVector::from_iterator(
        theta0.len(),
        (0..theta0.len()).map(|_| T::lit(StandardNormal.sample(&mut rng))),
    );
    let mut delta = noise.component_mul(&sigma);
    for _ in 0..MAX_SHRINK {
        let cand = theta0 + &delta;
        if obj.evaluate(&cand).is_stable() {
            return cand;
        }
        delta *= T::lit(0.5);
    }
    theta0 + delta
}

#[derive(Debug, Clone)]
pub struct MultistartResult<T: Scalar> {
    pub best: StartResult<T>,
    pub start_index: usize,
    pub starts: Vec<StartSummary>,
}

/// Runs [`descend`] from `theta0` and from `multistart - 1` seeded
/// perturbations of it; the lowest final value wins, ties by start index.
pub fn multistart<T: Scalar>(obj: &SynthesisObjective<T>, theta0: &DVector<T>, opts: &SearchOptions) -> Result<MultistartResult<T>> {
    let count = opts.multistart.max(1);
    let results = (0..count)
        .into_par_iter()
        .map(|k| {
            let start = if k == 0 {
                theta0.clone()
            } else {
                perturbed_start(obj, theta0, k, opts.seed)
            };
            descend(obj, start, opts)
        })
        .collect::<Result<Vec<_>>>()?;
    let starts = results
        .iter()
        .enumerate()
        .map(|(index, r)| StartSummary {
            index,
            initial_value: r.initial_value.as_f64(),
            final_value: r.eval.value.as_f64(),
            iterations: r.iterations,
            stable: r.eval.is_stable(),
        })
        .collect();
    let mut win = 0;
    for (k, r) in results.iter().enumerate() {
        if r.eval.value < results[win].eval.value {
            win = k;
        }
    }
    if !results[win].eval.is_stable() {
        let best_abscissa = results
            .iter()
            .map(|r| r.eval.worst_abscissa.as_f64())
            .fold(f64::INFINITY, f64::min);
        return Err(Error::NoStableStart {
            starts: count,
            best_abscissa,
        });
    }
    let best = results.into_iter().nth(win).expect("winner index in range");
    Ok(MultistartResult {
        best,
        start_index: win,
        starts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn hull_of_opposite_vectors_is_zero() {
        let d = min_norm_hull(&[dvector![1.0, 1.0], dvector![-1.0, -1.0]]);
        assert!(d.norm() < 1e-12);
    }

    #[test]
    fn hull_projection_onto_segment() {
        let d = min_norm_hull(&[dvector![1.0, 1.0], dvector![1.0, -1.0]]);
        assert!((d - dvector![1.0, 0.0]).norm() < 1e-12);
        let d = min_norm_hull(&[dvector![1.0, 0.0], dvector![3.0, 1.0]]);
        assert!((d - dvector![1.0, 0.0]).norm() < 1e-12);
    }

    #[test]
    fn hull_three_points() {
        let g = [dvector![2.0, 1.0], dvector![-1.0, 2.0], dvector![1.0, 3.0]];
        let d = min_norm_hull(&g);
        // optimality: <g_i, d> >= |d|^2 for every generator
        for gi in &g {
            assert!(gi.dot(&d) >= d.norm_squared() - 1e-10);
        }
    }
}
