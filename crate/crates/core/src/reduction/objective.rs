//! Grid worst-case H-infinity objective of `F_l(P, K)` over masked
//! controller parameters, with its active-point subgradient.

use super::mask::{Parameterization, Which};
use crate::analysis::{hinf_norm, spectral_abscissa};
use crate::error::{Error, Result};
use crate::model::{lower_lft_frozen, GeneralizedPlant, LtiStateSpace};
use crate::scalar::Scalar;
use nalgebra::{Complex, ComplexField, DMatrix, DVector};
use rayon::prelude::*;

/// Penalty offset for candidates that are not stable on the grid.
pub const BIG: f64 = 1e6;

const REPEATED_SIGMA: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointValue<T> {
    pub gamma: T,
    pub omega: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation<T: Scalar> {
    pub value: T,
    /// Largest closed-loop spectral abscissa over the grid.
    pub worst_abscissa: T,
    /// Per grid point norms; empty for penalized candidates.
    pub points: Vec<PointValue<T>>,
    /// First grid index attaining `value` (stable branch only).
    pub active: usize,
}

impl<T: Scalar> Evaluation<T> {
    pub fn is_stable(&self) -> bool {
        !self.points.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct Subgradient<T: Scalar> {
    pub grad: DVector<T>,
    /// `false` when the top singular value at the active point is repeated;
    /// `grad` is then a finite-difference estimate.
    pub smooth: bool,
}

/// `theta -> max_i ||F_l(P(rho_i), K_theta(rho_i))||_inf`.
#[derive(Debug, Clone)]
pub struct SynthesisObjective<T: Scalar> {
    plant: GeneralizedPlant<T>,
    param: Parameterization<T>,
    grid: Vec<Vec<T>>,
    frozen: Vec<LtiStateSpace<T>>,
    rel_tol: T,
    eps_stab: T,
}

enum PointOutcome<T> {
    Stable(T, PointValue<T>),
    Unstable(T),
}

impl<T: Scalar> SynthesisObjective<T> {
    pub fn new(
        plant: GeneralizedPlant<T>,
        param: Parameterization<T>,
        grid: Vec<Vec<T>>,
        rel_tol: T,
        eps_stab: T,
    ) -> Result<Self> {
        let mask = param.mask();
        if mask.n_u() != plant.n_y || mask.n_y() != plant.n_u {
            return Err(Error::Dimension(format!(
                "structure is {}x{}, plant loop channel is {}x{}",
                mask.n_y(),
                mask.n_u(),
                plant.n_u,
                plant.n_y
            )));
        }
        if param.template().params != plant.model.params {
            return Err(Error::Dimension("controller and plant parameter boxes differ".into()));
        }
        if grid.is_empty() {
            return Err(Error::InvalidArgument("empty evaluation grid".into()));
        }
        if !(eps_stab > T::zero()) {
            return Err(Error::InvalidArgument("stability margin must be positive".into()));
        }
        let frozen = grid
            .iter()
            .map(|rho| plant.model.freeze(rho))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            plant,
            param,
            grid,
            frozen,
            rel_tol,
            eps_stab,
        })
    }

    pub fn param(&self) -> &Parameterization<T> {
        &self.param
    }

    pub fn grid(&self) -> &[Vec<T>] {
        &self.grid
    }

    pub fn plant(&self) -> &GeneralizedPlant<T> {
        &self.plant
    }

    fn split(&self) -> (usize, usize, usize, usize) {
        (self.plant.n_w, self.plant.n_u, self.plant.n_z, self.plant.n_y)
    }

    fn closed_loop(&self, k: &LtiStateSpace<T>, i: usize) -> Result<LtiStateSpace<T>> {
        lower_lft_frozen(&self.frozen[i], self.split(), k)
    }

    fn point(&self, k: &crate::model::LpvModel<T>, i: usize) -> PointOutcome<T> {
        let ki = k.freeze_unchecked(&self.grid[i]);
        let cl = match self.closed_loop(&ki, i) {
            Ok(cl) => cl,
            Err(_) => return PointOutcome::Unstable(T::lit(f64::INFINITY)),
        };
        let alpha = if cl.n_x() == 0 {
            T::lit(f64::NEG_INFINITY)
        } else {
            match spectral_abscissa(&cl.a) {
                Ok(a) if a.is_finite() => a,
                _ => return PointOutcome::Unstable(T::lit(f64::INFINITY)),
            }
        };
        if alpha >= -self.eps_stab {
            return PointOutcome::Unstable(alpha);
        }
        match hinf_norm(&cl, self.rel_tol) {
            Ok(h) => PointOutcome::Stable(
                alpha,
                PointValue {
                    gamma: h.gamma,
                    omega: h.peak_frequency,
                },
            ),
            Err(e) => {
                log::debug!("norm evaluation failed at grid point {i}: {e}");
                PointOutcome::Unstable(T::zero())
            }
        }
    }

    pub fn evaluate(&self, theta: &DVector<T>) -> Evaluation<T> {
        let k = self.param.unpack(theta);
        let outcomes: Vec<PointOutcome<T>> = (0..self.grid.len())
            .into_par_iter()
            .map(|i| self.point(&k, i))
            .collect();
        let mut worst_abscissa = T::lit(f64::NEG_INFINITY);
        let mut unstable = false;
        let mut points = Vec::with_capacity(outcomes.len());
        for o in &outcomes {
            match *o {
                PointOutcome::Stable(a, p) => {
                    worst_abscissa = worst_abscissa.max(a);
                    points.push(p);
                }
                PointOutcome::Unstable(a) => {
                    worst_abscissa = worst_abscissa.max(a);
                    unstable = true;
                }
            }
        }
        if unstable {
            let cap = T::lit(BIG);
            return Evaluation {
                value: T::lit(BIG) + worst_abscissa.min(cap),
                worst_abscissa,
                points: Vec::new(),
                active: 0,
            };
        }
        let mut active = 0;
        for (i, p) in points.iter().enumerate() {
            if p.gamma > points[active].gamma {
                active = i;
            }
        }
        Evaluation {
            value: points[active].gamma,
            worst_abscissa,
            points,
            active,
        }
    }

    pub fn value(&self, theta: &DVector<T>) -> T {
        self.evaluate(theta).value
    }

    /// Norm at a single grid point, `inf` when that point is not stable.
    pub fn point_value(&self, theta: &DVector<T>, i: usize) -> T {
        match self.point(&self.param.unpack(theta), i) {
            PointOutcome::Stable(_, p) => p.gamma,
            PointOutcome::Unstable(_) => T::lit(f64::INFINITY),
        }
    }

    /// Central-difference gradient of [`Self::point_value`].
    pub fn fd_point_gradient(&self, theta: &DVector<T>, i: usize, h: T) -> DVector<T> {
        let mut g = DVector::zeros(theta.len());
        let mut t = theta.clone();
        for k in 0..theta.len() {
            let step = h * (T::one() + theta[k].abs());
            t[k] = theta[k] + step;
            let fp = self.point_value(&t, i);
            t[k] = theta[k] - step;
            let fm = self.point_value(&t, i);
            t[k] = theta[k];
            g[k] = (fp - fm) / (step + step);
        }
        g
    }

    /// Derivative of `sigma_max(F_l(P, K)(j omega))` at grid point `i`.
    ///
    /// With top singular pair `(u, v)`, `L = u^H P12 (I - K P22)^{-1}` and
    /// `R = (I - P22 K)^{-1} P21 v`, a change `dK` moves sigma by
    /// `Re(L dK R)`, and `dK = dD + dC Phi B + C Phi dB + C Phi dA Phi B`.
    pub fn subgradient(&self, theta: &DVector<T>, i: usize, omega: T) -> Result<Subgradient<T>> {
        match self.analytic_gradient(theta, i, omega)? {
            Some(grad) => Ok(Subgradient { grad, smooth: true }),
            None => Ok(Subgradient {
                grad: self.fd_point_gradient(theta, i, T::lit(1e-6)),
                smooth: false,
            }),
        }
    }

    fn analytic_gradient(&self, theta: &DVector<T>, i: usize, omega: T) -> Result<Option<DVector<T>>> {
        let k = self.param.unpack(theta);
        let rho = &self.grid[i];
        let ki = k.freeze_unchecked(rho);
        let p = &self.frozen[i];
        let (n_w, n_u, n_z, n_y) = self.split();
        let finite = omega.is_finite();
        let s = T::cplx(T::zero(), if finite { omega } else { T::zero() });
        let (pm, km) = if finite {
            match (p.eval_at(s), ki.eval_at(s)) {
                (Ok(a), Ok(b)) => (a, b),
                _ => return Ok(None),
            }
        } else {
            (crate::linalg::to_complex(&p.d), crate::linalg::to_complex(&ki.d))
        };
        let p11 = pm.view((0, 0), (n_z, n_w)).into_owned();
        let p12 = pm.view((0, n_w), (n_z, n_u)).into_owned();
        let p21 = pm.view((n_z, 0), (n_y, n_w)).into_owned();
        let p22 = pm.view((n_z, n_w), (n_y, n_u)).into_owned();
        let eye = |n: usize| DMatrix::<Complex<T>>::identity(n, n);
        let left = (eye(n_u) - &km * &p22).try_inverse();
        let right = (eye(n_y) - &p22 * &km).try_inverse();
        let (left, right) = match (left, right) {
            (Some(l), Some(r)) => (l, r),
            _ => return Ok(None),
        };
        let t = &p11 + &p12 * &km * &right * &p21;
        if t.is_empty() {
            return Ok(Some(DVector::zeros(theta.len())));
        }
        let svd = t.svd(true, true);
        let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
        let sv = &svd.singular_values;
        idx.sort_by(|&a, &b| sv[b].partial_cmp(&sv[a]).unwrap_or(std::cmp::Ordering::Equal));
        let top = idx[0];
        if idx.len() > 1 && sv[top] - sv[idx[1]] <= T::lit(REPEATED_SIGMA) * sv[top].max(T::eps()) {
            return Ok(None);
        }
        let u = svd.u.expect("left vectors requested").column(top).into_owned();
        let v = svd.v_t.expect("right vectors requested").row(top).adjoint();
        let l_row: DMatrix<Complex<T>> = DMatrix::from_column_slice(1, n_u, (u.adjoint() * &p12 * &left).as_slice());
        let r_col: DMatrix<Complex<T>> = DMatrix::from_column_slice(n_y, 1, (&right * &p21 * v).as_slice());

        let (l_state, r_state): (DMatrix<Complex<T>>, DMatrix<Complex<T>>) = if finite && ki.n_x() > 0 {
            let nk = ki.n_x();
            let mut m = -crate::linalg::to_complex(&ki.a);
            for j in 0..nk {
                m[(j, j)] += s;
            }
            let phi = match m.try_inverse() {
                Some(phi) => phi,
                None => return Ok(None),
            };
            let l = &l_row * crate::linalg::to_complex(&ki.c) * &phi;
            let r = &phi * crate::linalg::to_complex(&ki.b) * &r_col;
            (l, r)
        } else {
            let nk = ki.n_x();
            (DMatrix::zeros(1, nk), DMatrix::zeros(nk, 1))
        };

        let mut grad = DVector::zeros(theta.len());
        for (g, slot) in grad.iter_mut().zip(self.param.slots()) {
            let w = if slot.term == 0 { T::one() } else { rho[slot.term - 1] };
            let z = match slot.which {
                Which::A => l_state[(0, slot.row)] * r_state[(slot.col, 0)],
                Which::B => l_state[(0, slot.row)] * r_col[(slot.col, 0)],
                Which::C => l_row[(0, slot.row)] * r_state[(slot.col, 0)],
                Which::D => l_row[(0, slot.row)] * r_col[(slot.col, 0)],
            };
            *g = z.real() * w;
        }
        Ok(Some(grad))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::{build_msd, MsdConfig};
    use crate::model::{generalized_plant, AffineMatrix, LpvModel, ParameterBox};
    use crate::reduction::mask::StructureMask;
    use nalgebra::dmatrix;

    fn reduction_objective(g: &LpvModel<f64>, mask: StructureMask) -> SynthesisObjective<f64> {
        let param = Parameterization::zero_template(mask, &g.d, g.params.clone()).unwrap();
        SynthesisObjective::new(generalized_plant(g), param, g.params.grid(3), 1e-9, 1e-6).unwrap()
    }

    #[test]
    fn exact_model_has_zero_error() {
        let g = build_msd::<f64>(&MsdConfig::new(2, 1)).unwrap();
        let obj = reduction_objective(&g, StructureMask::full(4, 1, 1, 1));
        let theta = obj.param().pack(&g).unwrap();
        let e = obj.evaluate(&theta);
        assert!(e.is_stable());
        assert!(e.value <= 1e-9, "{}", e.value);
    }

    #[test]
    fn unstable_candidate_is_penalized() {
        let g = build_msd::<f64>(&MsdConfig::new(2, 1)).unwrap();
        let obj = reduction_objective(&g, StructureMask::full(2, 1, 1, 1));
        let mut theta = DVector::zeros(obj.param().n_free());
        theta[0] = 0.5;
        let e = obj.evaluate(&theta);
        assert!(!e.is_stable());
        assert!(e.value > BIG);
    }

    #[test]
    fn static_gradient_is_minus_outer_product() {
        let d = dmatrix![3.0, 1.0; 0.5, 2.0];
        let g = LpvModel::from_lti(&LtiStateSpace::static_gain(d.clone()), ParameterBox::unit(0));
        let mask = StructureMask::full(0, 2, 2, 0);
        let param = Parameterization::zero_template(mask, &AffineMatrix::zeros(2, 2, 0), ParameterBox::unit(0)).unwrap();
        let obj = SynthesisObjective::new(generalized_plant(&g), param, vec![vec![]], 1e-9, 1e-6).unwrap();
        let theta = DVector::from_vec(vec![0.1, 0.2, -0.3, 0.4]);
        let e = obj.evaluate(&theta);
        let diff = &d - obj.param().unpack(&theta).d.constant();
        let svd = diff.svd(true, true);
        let (u, v) = (svd.u.unwrap().column(0).into_owned(), svd.v_t.unwrap().row(0).transpose());
        let grad = obj.subgradient(&theta, 0, e.points[0].omega).unwrap();
        assert!(grad.smooth);
        for (k, slot) in obj.param().slots().iter().enumerate() {
            let want = -u[slot.row] * v[slot.col];
            assert!((grad.grad[k] - want).abs() < 1e-12, "{k}: {} vs {want}", grad.grad[k]);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let g = build_msd::<f64>(&MsdConfig::new(2, 1)).unwrap();
        let obj = reduction_objective(&g, StructureMask::modal(2, 1, 1, 1));
        let start = crate::reduction::lpv_balanced_truncate(&g, 2, &g.params.vertices().unwrap()).unwrap();
        let mut theta = obj.param().pack(&obj.param().project(&start).unwrap()).unwrap();
        theta[1] += 0.05;
        let e = obj.evaluate(&theta);
        assert!(e.is_stable());
        for i in 0..obj.grid().len() {
            let an = obj.subgradient(&theta, i, e.points[i].omega).unwrap();
            assert!(an.smooth);
            let fd = obj.fd_point_gradient(&theta, i, 1e-6);
            let rel = (&an.grad - &fd).norm() / fd.norm().max(1e-12);
            assert!(rel < 1e-5, "point {i}: rel {rel}");
        }
    }
}
