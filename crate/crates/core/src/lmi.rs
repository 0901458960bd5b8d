//! Log-det barrier solver for the linear matrix inequalities used by the
//! bounded-real certificate and the generalized Gramians.
//!
//! Every constraint block has the form
//!
//! ```text
//! S(X, t) = F0 + c t I + s (E^T X U + U^T X E)  >  0
//! ```
//!
//! with a symmetric `n x n` decision matrix `X` shared by all blocks and an
//! optional scalar `t`. A bound `trace(X) < R` keeps the feasible set bounded.

use crate::error::{Error, Result};
use crate::linalg;
use crate::scalar::Scalar;
use nalgebra::{Cholesky, DMatrix, DVector};

#[derive(Debug, Clone)]
pub(crate) struct Block<T: Scalar> {
    pub f0: DMatrix<T>,
    pub e: DMatrix<T>,
    pub u: DMatrix<T>,
    pub sign: T,
    pub t_coeff: T,
}

impl<T: Scalar> Block<T> {
    pub fn size(&self) -> usize {
        self.f0.nrows()
    }

    pub fn eval(&self, x: &DMatrix<T>, t: T) -> DMatrix<T> {
        let ex = self.e.transpose() * x * &self.u;
        let mut s = &self.f0 + (&ex + ex.transpose()) * self.sign;
        if self.t_coeff != T::zero() {
            for i in 0..s.nrows() {
                s[(i, i)] += self.t_coeff * t;
            }
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Objective {
    /// Minimize `t`; stop as soon as the sign of the optimum is decided.
    MinT,
    /// Minimize `trace(X)`; there is no `t` variable.
    MinTrace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Status {
    Feasible,
    Infeasible,
    Indeterminate,
    Optimal,
}

#[derive(Debug, Clone)]
pub(crate) struct Solution<T: Scalar> {
    pub x: DMatrix<T>,
    pub status: Status,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct Problem<T: Scalar> {
    pub n: usize,
    pub blocks: Vec<Block<T>>,
    pub objective: Objective,
    pub trace_bound: T,
    /// `MinT` declares feasibility once `t < -threshold`.
    pub threshold: T,
    /// `MinTrace` stops once the duality gap is below `gap_tol * (1 + trace)`.
    pub gap_tol: T,
}

struct Point<T: Scalar> {
    x: DMatrix<T>,
    t: T,
}

const MAX_NEWTON: usize = 60;
const MAX_OUTER: usize = 90;

impl<T: Scalar> Problem<T> {
    fn n_sym(&self) -> usize {
        self.n * (self.n + 1) / 2
    }

    fn has_t(&self) -> bool {
        self.objective == Objective::MinT
    }

    fn dim(&self) -> usize {
        self.n_sym() + usize::from(self.has_t())
    }

    fn nu(&self) -> T {
        let m: usize = self.blocks.iter().map(Block::size).sum();
        T::lit((m + usize::from(self.n > 0)) as f64)
    }

    fn sym_index(&self) -> Vec<(usize, usize)> {
        let mut idx = Vec::with_capacity(self.n_sym());
        for a in 0..self.n {
            for b in a..self.n {
                idx.push((a, b));
            }
        }
        idx
    }

    fn step(&self, p: &Point<T>, idx: &[(usize, usize)], dz: &DVector<T>, alpha: T) -> Point<T> {
        let mut x = p.x.clone();
        for (k, &(a, b)) in idx.iter().enumerate() {
            x[(a, b)] += alpha * dz[k];
            if a != b {
                x[(b, a)] = x[(a, b)];
            }
        }
        let t = if self.has_t() { p.t + alpha * dz[idx.len()] } else { p.t };
        Point { x, t }
    }

    fn objective_value(&self, p: &Point<T>) -> T {
        match self.objective {
            Objective::MinT => p.t,
            Objective::MinTrace => p.x.trace(),
        }
    }

    /// Barrier value, or `None` outside the domain.
    fn barrier(&self, p: &Point<T>) -> Option<T> {
        let mut phi = T::zero();
        for blk in &self.blocks {
            let chol = Cholesky::new(blk.eval(&p.x, p.t))?;
            let l = chol.l();
            for i in 0..l.nrows() {
                phi -= T::lit(2.0) * l[(i, i)].ln();
            }
        }
        if self.n > 0 {
            let slack = self.trace_bound - p.x.trace();
            if slack <= T::zero() {
                return None;
            }
            phi -= slack.ln();
        }
        phi.is_finite().then_some(phi)
    }

    /// Gradient and Hessian of the barrier.
    fn derivatives(&self, p: &Point<T>, idx: &[(usize, usize)]) -> Option<(DVector<T>, DMatrix<T>)> {
        let dim = self.dim();
        let ns = idx.len();
        let two = T::lit(2.0);
        let mut g = DVector::zeros(dim);
        let mut h = DMatrix::zeros(dim, dim);
        let pairs: Vec<Vec<(usize, usize)>> = idx
            .iter()
            .map(|&(a, b)| if a == b { vec![(a, a)] } else { vec![(a, b), (b, a)] })
            .collect();
        for blk in &self.blocks {
            let s = blk.eval(&p.x, p.t);
            let l = Cholesky::new(s)?.l();
            let b = l.nrows();
            let linv = l.solve_lower_triangular(&DMatrix::identity(b, b))?;
            let pm = &linv * blk.e.transpose();
            let qm = &linv * blk.u.transpose();
            let pp = pm.transpose() * &pm;
            let pq = pm.transpose() * &qm;
            let qq = qm.transpose() * &qm;
            let sg = blk.sign;
            for k in 0..ns {
                let mut tr = T::zero();
                for &(i, j) in &pairs[k] {
                    tr += pq[(i, j)];
                }
                g[k] -= two * sg * tr;
                for l2 in k..ns {
                    let mut acc = T::zero();
                    for &(i, j) in &pairs[k] {
                        for &(pi, qi) in &pairs[l2] {
                            acc += pq[(pi, j)] * pq[(i, qi)] + qq[(j, qi)] * pp[(pi, i)];
                        }
                    }
                    h[(k, l2)] += two * sg * sg * acc;
                }
            }
            if self.has_t() && blk.t_coeff != T::zero() {
                let c = blk.t_coeff;
                let kk = &linv * linv.transpose();
                g[ns] -= c * linv.norm_squared();
                h[(ns, ns)] += c * c * kk.norm_squared();
                let pkq = pm.transpose() * &kk * &qm;
                for k in 0..ns {
                    let mut acc = T::zero();
                    for &(i, j) in &pairs[k] {
                        acc += pkq[(i, j)];
                    }
                    h[(k, ns)] += two * c * sg * acc;
                }
            }
        }
        if self.n > 0 {
            let slack = self.trace_bound - p.x.trace();
            let inv = T::one() / slack;
            let diag: Vec<usize> = (0..ns).filter(|&k| idx[k].0 == idx[k].1).collect();
            for &k in &diag {
                g[k] += inv;
                for &l2 in &diag {
                    if l2 >= k {
                        h[(k, l2)] += inv * inv;
                    }
                }
            }
        }
        for k in 0..dim {
            for l2 in 0..k {
                h[(k, l2)] = h[(l2, k)];
            }
        }
        Some((g, h))
    }

    fn cost_vector(&self, idx: &[(usize, usize)]) -> DVector<T> {
        let mut c = DVector::zeros(self.dim());
        match self.objective {
            Objective::MinT => c[idx.len()] = T::one(),
            Objective::MinTrace => {
                for (k, &(a, b)) in idx.iter().enumerate() {
                    if a == b {
                        c[k] = T::one();
                    }
                }
            }
        }
        c
    }

    /// Smallest `t` making every block positive definite at `x`.
    pub fn required_t(&self, x: &DMatrix<T>) -> T {
        let mut req = T::lit(f64::NEG_INFINITY);
        for blk in self.blocks.iter().filter(|b| b.t_coeff > T::zero()) {
            let lam = linalg::sym_eigenvalues(&blk.eval(x, T::zero()));
            if let Some(&lmin) = lam.first() {
                req = req.max(-lmin / blk.t_coeff);
            }
        }
        req
    }

    fn scale(&self) -> T {
        self.blocks
            .iter()
            .fold(T::one(), |m, b| m.max(b.f0.amax() + T::one()))
    }

    /// Runs the barrier method from `x0`.
    ///
    /// For `MinT` any `x0` works; `t` is initialized above the smallest
    /// admissible value. For `MinTrace`, `x0` must be strictly feasible.
    /// The trace bound starts well below `trace_bound` and is enlarged while
    /// an infeasible or undecided answer leaves `X` close to it.
    pub fn solve(&self, x0: &DMatrix<T>) -> Result<Solution<T>> {
        let cap = self.trace_bound;
        let two = T::lit(2.0);
        let mut bound = (cap * T::lit(1e-5)).max(two * x0.trace().abs() + T::one()).min(cap);
        loop {
            let mut sub = self.clone();
            sub.trace_bound = bound;
            let sol = sub.solve_bounded(x0)?;
            let retry = matches!(sol.status, Status::Infeasible | Status::Indeterminate)
                && bound < cap
                && two * sol.x.trace() > bound;
            if !retry {
                return Ok(sol);
            }
            bound = (bound * T::lit(100.0)).min(cap);
        }
    }

    fn solve_bounded(&self, x0: &DMatrix<T>) -> Result<Solution<T>> {
        let idx = self.sym_index();
        let nu = self.nu();
        let scale = self.scale();
        let mut p = Point {
            x: linalg::symmetrize(x0),
            t: T::zero(),
        };
        if self.has_t() {
            let req = self.required_t(&p.x);
            if req < -self.threshold {
                return Ok(Solution {
                    x: p.x,
                    status: Status::Feasible,
                    iterations: 0,
                });
            }
            p.t = req + (T::lit(0.1) * req.abs()).max(T::lit(1e-2) * scale);
        }
        if self.barrier(&p).is_none() {
            return Err(Error::Numerical(
                "barrier solver started outside the feasible domain".into(),
            ));
        }
        let cost = self.cost_vector(&idx);
        let obj0 = self.objective_value(&p);
        let mut tau = nu / scale.max(obj0.abs());
        let mut iterations = 0;
        let finish = |p: Point<T>, status, iterations| Solution {
            x: p.x,
            status,
            iterations,
        };

        for _ in 0..MAX_OUTER {
            for _ in 0..MAX_NEWTON {
                let (g, h) = self
                    .derivatives(&p, &idx)
                    .ok_or_else(|| Error::Numerical("lost feasibility in barrier solve".into()))?;
                let grad = &cost * tau + g;
                let dz = match newton_direction(&h, &grad) {
                    Some(d) => d,
                    None => return Ok(finish(p, Status::Indeterminate, iterations)),
                };
                let dec = -grad.dot(&dz);
                iterations += 1;
                if dec <= T::lit(1e-10) {
                    break;
                }
                let phi0 = tau * self.objective_value(&p) + self.barrier(&p).expect("current point feasible");
                let mut alpha = T::one();
                let mut accepted = false;
                while alpha > T::lit(1e-14) {
                    let cand = self.step(&p, &idx, &dz, alpha);
                    if let Some(b) = self.barrier(&cand) {
                        let phi = tau * self.objective_value(&cand) + b;
                        if phi <= phi0 - T::lit(0.25) * alpha * dec {
                            p = cand;
                            accepted = true;
                            break;
                        }
                    }
                    alpha *= T::lit(0.5);
                }
                if !accepted {
                    break;
                }
                if self.has_t() && p.t < -self.threshold {
                    return Ok(finish(p, Status::Feasible, iterations));
                }
                if dec <= T::lit(1e-7) {
                    break;
                }
            }
            let gap = nu / tau;
            match self.objective {
                Objective::MinT => {
                    if p.t < -self.threshold {
                        return Ok(finish(p, Status::Feasible, iterations));
                    }
                    if p.t - T::lit(1.25) * gap > -self.threshold {
                        return Ok(finish(p, Status::Infeasible, iterations));
                    }
                    if gap < T::lit(1e-3) * self.threshold {
                        return Ok(finish(p, Status::Indeterminate, iterations));
                    }
                }
                Objective::MinTrace => {
                    if gap <= self.gap_tol * (T::one() + p.x.trace().abs()) {
                        return Ok(finish(p, Status::Optimal, iterations));
                    }
                }
            }
            tau *= T::lit(2.0);
        }
        let status = match self.objective {
            Objective::MinT => Status::Indeterminate,
            Objective::MinTrace => Status::Optimal,
        };
        Ok(finish(p, status, iterations))
    }
}

/// Solves `H d = -g` on the Jacobi-equilibrated system with one step of
/// iterative refinement, shifting the diagonal when `H` is numerically
/// singular.
fn newton_direction<T: Scalar>(h: &DMatrix<T>, g: &DVector<T>) -> Option<DVector<T>> {
    let m = h.nrows();
    let d = DVector::from_iterator(
        m,
        (0..m).map(|i| {
            let v = h[(i, i)];
            if v > T::zero() { T::one() / v.sqrt() } else { T::one() }
        }),
    );
    let hs = DMatrix::from_fn(m, m, |i, j| d[i] * h[(i, j)] * d[j]);
    let gs = g.component_mul(&d);
    let mut shift = T::zero();
    for _ in 0..9 {
        let mut hk = hs.clone();
        for i in 0..m {
            hk[(i, i)] += shift;
        }
        if let Some(ch) = Cholesky::new(hk.clone()) {
            let mut y = -ch.solve(&gs);
            let r = -(&gs) - &hk * &y;
            y += ch.solve(&r);
            return Some(y.component_mul(&d));
        }
        shift = if shift == T::zero() { T::lit(1e-12) } else { shift * T::lit(100.0) };
    }
    None
}
