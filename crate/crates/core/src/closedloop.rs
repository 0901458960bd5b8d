//! Mixed-sensitivity controller design with the reduction engine, and
//! validation of the resulting loops on the full-order model.

use crate::analysis::{care, grid_worst_hinf, spectral_abscissa, step_response, Trajectory};
use crate::certify::{certify_bound, MAX_VERTEX_PARAMS};
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{lower_lft, lower_lft_frozen, AffineMatrix, GeneralizedPlant, LpvModel, LtiStateSpace};
use crate::reduction::{balanced_truncate, pad_states, synthesize, ReductionConfig, StructureMask, SynthesisReport};
use crate::scalar::Scalar;
use nalgebra::DMatrix;
use serde_json::{json, Value};

/// Loop-shaping weights; SISO weights are repeated on every channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights<T: Scalar> {
    pub we: LtiStateSpace<T>,
    pub wu: LtiStateSpace<T>,
}

impl<T: Scalar> Default for Weights<T> {
    /// `We = (s/2 + 0.3) / (s + 1e-4)`, `Wu = 0.1`.
    fn default() -> Self {
        let p = T::lit(1e-4);
        let we = LtiStateSpace::new(
            DMatrix::from_element(1, 1, -p),
            DMatrix::from_element(1, 1, T::one()),
            DMatrix::from_element(1, 1, T::lit(0.3) - T::lit(0.5) * p),
            DMatrix::from_element(1, 1, T::lit(0.5)),
        )
        .expect("scalar realization");
        Self {
            we,
            wu: LtiStateSpace::static_gain(DMatrix::from_element(1, 1, T::lit(0.1))),
        }
    }
}

fn broadcast<T: Scalar>(w: &LtiStateSpace<T>, channels: usize, name: &str) -> Result<LtiStateSpace<T>> {
    if w.n_u() == channels && w.n_y() == channels {
        return Ok(w.clone());
    }
    if w.n_u() != 1 || w.n_y() != 1 {
        return Err(Error::Dimension(format!(
            "weight {name} is {}x{}, loop has {channels} channels",
            w.n_y(),
            w.n_u()
        )));
    }
    let mut out = w.clone();
    for _ in 1..channels {
        out = LtiStateSpace::new(
            linalg::blockdiag(&out.a, &w.a),
            linalg::blockdiag(&out.b, &w.b),
            linalg::blockdiag(&out.c, &w.c),
            linalg::blockdiag(&out.d, &w.d),
        )?;
    }
    Ok(out)
}

impl<T: Scalar> Weights<T> {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [("We", &self.we), ("Wu", &self.wu)] {
            if w.n_x() > 0 && !(spectral_abscissa(&w.a)? < T::zero()) {
                return Err(Error::InvalidArgument(format!("weight {name} is not stable")));
            }
        }
        Ok(())
    }

    /// States the weights add to a plant with `n_y` outputs and `n_u` inputs.
    pub fn order(&self, n_u: usize, n_y: usize) -> usize {
        let reps = |w: &LtiStateSpace<T>, ch: usize| if w.n_u() == 1 && w.n_y() == 1 { ch } else { 1 };
        self.we.n_x() * reps(&self.we, n_y) + self.wu.n_x() * reps(&self.wu, n_u)
    }
}

/// Plant with inputs `[r; u]`, outputs `[z_e; z_u; e]` and state
/// `[x; x_We; x_Wu]`, where `e = r - y`, `z_e = We e` and `z_u = Wu u`.
pub fn mixed_sensitivity_plant<T: Scalar>(g: &LpvModel<T>, w: &Weights<T>) -> Result<GeneralizedPlant<T>> {
    w.validate()?;
    let (ny, nu, nr) = (g.n_y(), g.n_u(), g.n_rho());
    let we = broadcast(&w.we, ny, "We")?;
    let wu = broadcast(&w.wu, nu, "Wu")?;
    let (nx, ne, nw) = (g.n_x(), we.n_x(), wu.n_x());
    let c = |m: &DMatrix<T>| AffineMatrix::from_constant(m.clone(), nr);
    let z = |r: usize, k: usize| AffineMatrix::zeros(r, k, nr);
    let eye_y = AffineMatrix::identity(ny, nr);

    let neg_c = g.c.scale(-T::one());
    let neg_d = g.d.scale(-T::one());
    let row = |parts: &[&AffineMatrix<T>]| AffineMatrix::hstack(parts);
    let a = AffineMatrix::vstack(&[
        &row(&[&g.a, &z(nx, ne), &z(nx, nw)])?,
        &row(&[&neg_c.premul(&we.b), &c(&we.a), &z(ne, nw)])?,
        &row(&[&z(nw, nx), &z(nw, ne), &c(&wu.a)])?,
    ])?;
    let b = AffineMatrix::vstack(&[
        &row(&[&z(nx, ny), &g.b])?,
        &row(&[&c(&we.b), &neg_d.premul(&we.b)])?,
        &row(&[&z(nw, ny), &c(&wu.b)])?,
    ])?;
    let cm = AffineMatrix::vstack(&[
        &row(&[&neg_c.premul(&we.d), &c(&we.c), &z(ny, nw)])?,
        &row(&[&z(nu, nx), &z(nu, ne), &c(&wu.c)])?,
        &row(&[&neg_c, &z(ny, ne), &z(ny, nw)])?,
    ])?;
    let d = AffineMatrix::vstack(&[
        &row(&[&c(&we.d), &neg_d.premul(&we.d)])?,
        &row(&[&z(nu, ny), &c(&wu.d)])?,
        &row(&[&eye_y, &neg_d])?,
    ])?;
    GeneralizedPlant::new(LpvModel::new(a, b, cm, d, g.params.clone())?, ny, nu, ny + nu, ny)
}

/// Plant with inputs `[r; u]` and outputs `[y; u; e]`; closing it with a
/// controller gives the reference-to-(output, control) map.
pub fn tracking_plant<T: Scalar>(g: &LpvModel<T>) -> Result<GeneralizedPlant<T>> {
    let (nx, ny, nu, nr) = (g.n_x(), g.n_y(), g.n_u(), g.n_rho());
    let z = |r: usize, k: usize| AffineMatrix::zeros(r, k, nr);
    let b = AffineMatrix::hstack(&[&z(nx, ny), &g.b])?;
    let c = AffineMatrix::vstack(&[&g.c, &z(nu, nx), &g.c.scale(-T::one())])?;
    let d = AffineMatrix::vstack(&[
        &AffineMatrix::hstack(&[&z(ny, ny), &g.d])?,
        &AffineMatrix::hstack(&[&z(nu, ny), &AffineMatrix::identity(nu, nr)])?,
        &AffineMatrix::hstack(&[&AffineMatrix::identity(ny, nr), &g.d.scale(-T::one())])?,
    ])?;
    GeneralizedPlant::new(LpvModel::new(g.a.clone(), b, c, d, g.params.clone())?, ny, nu, ny + nu, ny)
}

fn grid_stable<T: Scalar>(plant: &GeneralizedPlant<T>, k: &LpvModel<T>, grid: &[Vec<T>]) -> bool {
    let Ok(cl) = lower_lft(plant, k) else {
        return false;
    };
    grid.iter().all(|rho| {
        cl.freeze(rho)
            .ok()
            .and_then(|s| if s.n_x() == 0 { Some(-T::one()) } else { spectral_abscissa(&s.a).ok() })
            .is_some_and(|a| a < T::zero())
    })
}

/// Observer-based (LQG) controller for the frozen plant `p`: state feedback
/// weighted by the performance outputs, Kalman filter driven by the
/// exogenous inputs.
/// `reg` is added to the state and process-noise weights.
fn observer_controller<T: Scalar>(
    p: &LtiStateSpace<T>,
    split: (usize, usize, usize, usize),
    reg: T,
) -> Result<LtiStateSpace<T>> {
    let (n_w, n_u, n_z, n_y) = split;
    let n = p.n_x();
    let b1 = p.b.columns(0, n_w).into_owned();
    let b2 = p.b.columns(n_w, n_u).into_owned();
    let c1 = p.c.rows(0, n_z).into_owned();
    let c2 = p.c.rows(n_z, n_y).into_owned();
    let d12 = p.d.view((0, n_w), (n_z, n_u)).into_owned();
    let d21 = p.d.view((n_z, 0), (n_y, n_w)).into_owned();
    let d22 = p.d.view((n_z, n_w), (n_y, n_u)).into_owned();
    let eye = |k: usize| DMatrix::<T>::identity(k, k);

    let sf = care(
        &p.a,
        &b2,
        &(c1.transpose() * &c1 + eye(n) * reg),
        &(d12.transpose() * &d12 + eye(n_u) * T::lit(1e-6)),
        &(c1.transpose() * &d12),
    )?;
    let kf = care(
        &p.a.transpose(),
        &c2.transpose(),
        &(&b1 * b1.transpose() + eye(n) * reg),
        &(&d21 * d21.transpose() + eye(n_y) * T::lit(1e-6)),
        &(&b1 * d21.transpose()),
    )?;
    let f = sf.f;
    let l = kf.f.transpose();
    let a_k = &p.a + &b2 * &f + &l * &c2 + &l * &d22 * &f;
    LtiStateSpace::new(a_k, -l, f, DMatrix::zeros(n_u, n_y))
}

/// Start 0 of [`synthesize_controller`]: the LQG controller of the plant
/// frozen at the box center, balanced-truncated to `n_k` states, trying
/// state weights `1e-6, 1e-4, 1e-2, 1` in turn. If none stabilizes the grid,
/// the largest integral controller `k_i / (s + 1e-4)` from a halving
/// sequence that does.
pub fn controller_start<T: Scalar>(
    plant: &GeneralizedPlant<T>,
    n_k: usize,
    grid: &[Vec<T>],
) -> Result<(LpvModel<T>, String)> {
    let params = plant.model.params.clone();
    let split = (plant.n_w, plant.n_u, plant.n_z, plant.n_y);
    let frozen = plant.model.freeze(&params.center())?;
    for reg in [1e-6, 1e-4, 1e-2, 1.0] {
        let lqg = observer_controller(&frozen, split, T::lit(reg))
            .and_then(|k| {
                if k.n_x() <= n_k {
                    Ok(k)
                } else {
                    balanced_truncate(&k, n_k).map(|(kr, _)| kr)
                }
            })
            .map(|k| pad_states(&LpvModel::from_lti(&k, params.clone()), n_k));
        match lqg {
            Ok(k) if grid_stable(plant, &k, grid) => {
                return Ok((k, format!("LQG at the box center (state weight {reg:e}), balanced truncation")))
            }
            Ok(_) => log::debug!("LQG start with state weight {reg:e} does not stabilize the grid"),
            Err(e) => log::debug!("LQG start with state weight {reg:e} unavailable: {e}"),
        }
    }
    log::warn!("no LQG start stabilizes the grid; trying integral control");
    if plant.n_u != plant.n_y {
        return Err(Error::NoStableStart {
            starts: 1,
            best_abscissa: f64::NAN,
        });
    }
    let m = plant.n_y;
    let leak = T::lit(1e-4);
    let mut gain = T::one();
    for _ in 0..16 {
        let k = LtiStateSpace::new(
            DMatrix::identity(m, m) * -leak,
            DMatrix::identity(m, m) * gain,
            DMatrix::identity(m, m),
            DMatrix::zeros(m, m),
        )?;
        let k = pad_states(&LpvModel::from_lti(&k, params.clone()), n_k.max(m));
        if k.n_x() == n_k && grid_stable(plant, &k, grid) {
            return Ok((k, format!("integral control, gain {:e}", gain.as_f64())));
        }
        gain *= T::lit(0.5);
    }
    Err(Error::NoStableStart {
        starts: 1,
        best_abscissa: f64::NAN,
    })
}

/// Minimizes the grid worst-case norm of `F_l(plant, K)` over controllers
/// with the structure of `mask` (order `config.order`). This is the search
/// behind [`crate::reduce`]; with `initial = None` the start comes from
/// [`controller_start`].
pub fn synthesize_controller<T: Scalar>(
    plant: &GeneralizedPlant<T>,
    mask: &StructureMask,
    config: &ReductionConfig<T>,
    initial: Option<&LpvModel<T>>,
) -> Result<(SynthesisReport<T>, String)> {
    config.validate()?;
    mask.validate()?;
    if (mask.n_u(), mask.n_y(), mask.n_rho()) != (plant.n_y, plant.n_u, plant.model.n_rho()) {
        return Err(Error::Dimension("structure mask does not match the plant's loop channels".into()));
    }
    let (start, label) = match initial {
        Some(k) => (k.clone(), "given".to_string()),
        None => controller_start(plant, config.order, &config.grid)?,
    };
    Ok((synthesize(plant, mask, config, &start)?, label))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepMetrics<T: Scalar> {
    pub steady_state: T,
    /// `|1 - DC gain|` of the reference-to-output map.
    pub steady_state_error: T,
    /// Peak above the steady state, relative to it (zero if none).
    pub overshoot: T,
    /// First time after which the output stays within 2% of its steady
    /// state; `inf` if it does not settle within the horizon.
    pub settling_time: T,
    /// Time from 10% to 90% of the steady state; `inf` if not reached.
    pub rise_time: T,
}

fn step_metrics<T: Scalar>(y: &[T], dt: T, steady_state: T) -> StepMetrics<T> {
    let inf = T::lit(f64::INFINITY);
    let ss = steady_state;
    let mag = ss.abs();
    let peak = y.iter().fold(T::lit(f64::NEG_INFINITY), |m, &v| m.max(v * ss.signum()));
    let overshoot = if mag > T::zero() {
        ((peak - mag) / mag).max(T::zero())
    } else {
        T::zero()
    };
    let band = T::lit(0.02) * mag;
    let settling_time = match y.iter().rposition(|&v| (v - ss).abs() > band) {
        None => T::zero(),
        Some(k) if k + 1 < y.len() => dt * T::lit((k + 1) as f64),
        Some(_) => inf,
    };
    let cross = |frac: f64| {
        y.iter()
            .position(|&v| v * ss.signum() >= T::lit(frac) * mag)
            .map(|k| dt * T::lit(k as f64))
    };
    let rise_time = match (cross(0.1), cross(0.9)) {
        (Some(a), Some(b)) if mag > T::zero() => b - a,
        _ => inf,
    };
    StepMetrics {
        steady_state: ss,
        steady_state_error: (T::one() - ss).abs(),
        overshoot,
        settling_time,
        rise_time,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridPointReport<T: Scalar> {
    pub rho: Vec<T>,
    pub stable: bool,
    pub abscissa: T,
    /// Present when the frozen loop is stable.
    pub metrics: Option<StepMetrics<T>>,
    /// Columns: output `y`, then control `u`, for a unit reference step.
    pub step: Option<Trajectory<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopReport<T: Scalar> {
    pub points: Vec<GridPointReport<T>>,
    /// Worst grid H-infinity norm of the weighted loop `r -> [z_e; z_u]`;
    /// `None` when some grid loop is unstable.
    pub weighted_hinf: Option<T>,
    pub certified_bound: Option<T>,
    pub certification_error: Option<String>,
}

impl<T: Scalar> ClosedLoopReport<T> {
    pub fn stable_on_grid(&self) -> bool {
        self.points.iter().all(|p| p.stable)
    }

    fn worst(&self, f: impl Fn(&StepMetrics<T>) -> T) -> Option<T> {
        let mut out: Option<T> = None;
        for p in &self.points {
            let v = f(p.metrics.as_ref()?);
            out = Some(out.map_or(v, |o| o.max(v)));
        }
        out
    }

    pub fn max_steady_state_error(&self) -> Option<T> {
        self.worst(|m| m.steady_state_error)
    }

    pub fn max_overshoot(&self) -> Option<T> {
        self.worst(|m| m.overshoot)
    }

    pub fn max_settling_time(&self) -> Option<T> {
        self.worst(|m| m.settling_time)
    }

    pub fn to_json(&self) -> Value {
        let num = |x: T| {
            let v = x.as_f64();
            if v.is_finite() {
                json!(v)
            } else {
                Value::Null
            }
        };
        let opt = |x: Option<T>| x.map_or(Value::Null, num);
        json!({
            "stable_on_grid": self.stable_on_grid(),
            "weighted_hinf": opt(self.weighted_hinf),
            "certified_bound": opt(self.certified_bound),
            "certification_error": self.certification_error,
            "max_steady_state_error": opt(self.max_steady_state_error()),
            "max_overshoot": opt(self.max_overshoot()),
            "max_settling_time": opt(self.max_settling_time()),
            "points": self.points.iter().map(|p| json!({
                "rho": p.rho.iter().map(|r| r.as_f64()).collect::<Vec<_>>(),
                "stable": p.stable,
                "abscissa": num(p.abscissa),
                "steady_state": p.metrics.as_ref().map(|m| num(m.steady_state)),
                "steady_state_error": p.metrics.as_ref().map(|m| num(m.steady_state_error)),
                "overshoot": p.metrics.as_ref().map(|m| num(m.overshoot)),
                "settling_time": p.metrics.as_ref().map(|m| num(m.settling_time)),
                "rise_time": p.metrics.as_ref().map(|m| num(m.rise_time)),
            })).collect::<Vec<_>>(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationOptions<T: Scalar> {
    pub horizon: T,
    pub dt: T,
    pub certify: bool,
    pub cert_rel_tol: T,
    pub rel_tol: T,
}

impl<T: Scalar> Default for ValidationOptions<T> {
    fn default() -> Self {
        Self {
            horizon: T::lit(60.0),
            dt: T::lit(0.01),
            certify: false,
            cert_rel_tol: T::lit(1e-3),
            rel_tol: T::lit(1e-6),
        }
    }
}

/// Closes the unity-feedback loop of `g_full` with `k` (`u = K (r - y)`)
/// and evaluates it on `grid`.
pub fn validate<T: Scalar>(
    g_full: &LpvModel<T>,
    k: &LpvModel<T>,
    weights: &Weights<T>,
    grid: &[Vec<T>],
    opts: &ValidationOptions<T>,
) -> Result<ClosedLoopReport<T>> {
    if k.n_u() != g_full.n_y() || k.n_y() != g_full.n_u() {
        return Err(Error::Dimension(format!(
            "controller is {}x{}, plant is {}x{}",
            k.n_y(),
            k.n_u(),
            g_full.n_y(),
            g_full.n_u()
        )));
    }
    let track = tracking_plant(g_full)?;
    let split = (track.n_w, track.n_u, track.n_z, track.n_y);
    let mut points = Vec::with_capacity(grid.len());
    for rho in grid {
        let cl = lower_lft_frozen(&track.model.freeze(rho)?, split, &k.freeze(rho)?)?;
        let abscissa = if cl.n_x() == 0 {
            T::lit(f64::NEG_INFINITY)
        } else {
            spectral_abscissa(&cl.a)?
        };
        let stable = abscissa < T::zero();
        let (metrics, step) = if stable {
            // one reference channel at a time; metrics on the first
            let first = LtiStateSpace::new(cl.a.clone(), cl.b.columns(0, 1).into_owned(), cl.c.clone(), cl.d.columns(0, 1).into_owned())?;
            let traj = step_response(&first, opts.horizon, opts.dt)?;
            let y: Vec<T> = traj.samples.column(0).iter().copied().collect();
            let dc = first.dc_gain()?;
            let m = step_metrics(&y, opts.dt, dc[(0, 0)]);
            (Some(m), Some(traj))
        } else {
            (None, None)
        };
        points.push(GridPointReport {
            rho: rho.clone(),
            stable,
            abscissa,
            metrics,
            step,
        });
    }
    let mut report = ClosedLoopReport {
        points,
        weighted_hinf: None,
        certified_bound: None,
        certification_error: None,
    };
    if report.stable_on_grid() {
        let weighted = lower_lft(&mixed_sensitivity_plant(g_full, weights)?, k)?;
        report.weighted_hinf = Some(grid_worst_hinf(&weighted, grid, opts.rel_tol)?.gamma);
        if opts.certify {
            let cert = if weighted.n_rho() > MAX_VERTEX_PARAMS {
                Err(Error::InvalidArgument("too many parameters for vertex certification".into()))
            } else {
                weighted
                    .params
                    .vertices()
                    .and_then(|v| certify_bound(&weighted, opts.cert_rel_tol, &v))
            };
            match cert {
                Ok(c) => report.certified_bound = Some(c.certified_bound),
                Err(e) => report.certification_error = Some(e.to_string()),
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::{build_msd, MsdConfig};
    use crate::model::{generalized_plant, ParameterBox};
    use crate::reduction::{reduce, reduction_start};
    use nalgebra::dmatrix;

    fn static_model(d: DMatrix<f64>) -> LpvModel<f64> {
        LpvModel::from_lti(&LtiStateSpace::static_gain(d), ParameterBox::unit(0))
    }

    #[test]
    fn zero_controller_gives_we() {
        let g = build_msd::<f64>(&MsdConfig::new(2, 1)).unwrap();
        let w = Weights::default();
        let p = mixed_sensitivity_plant(&g, &w).unwrap();
        let k = LpvModel::from_lti(&LtiStateSpace::static_gain(dmatrix![0.0]), g.params.clone());
        let cl = lower_lft(&p, &k).unwrap().freeze(&[0.3]).unwrap();
        for om in [0.0, 0.1, 2.0] {
            let t = cl.freq_response(om).unwrap();
            let we = w.we.freq_response(om).unwrap();
            assert!((t[(0, 0)] - we[(0, 0)]).norm() < 1e-12);
            assert!(t[(1, 0)].norm() < 1e-12);
        }
    }

    #[test]
    fn static_loop_control_channel() {
        let p = mixed_sensitivity_plant(&static_model(dmatrix![0.0]), &Weights::default()).unwrap();
        let cl = lower_lft(&p, &static_model(dmatrix![3.0])).unwrap();
        let s = cl.freeze(&[]).unwrap();
        let t = s.freq_response(1.0).unwrap();
        assert!((t[(1, 0)].re - 0.3).abs() < 1e-12 && t[(1, 0)].im.abs() < 1e-12);
    }

    #[test]
    fn interconnection_matches_monolithic_realization() {
        let g = build_msd::<f64>(&MsdConfig::new(3, 1)).unwrap();
        let w = Weights::default();
        let k = LtiStateSpace::new(dmatrix![-1.0], dmatrix![1.0], dmatrix![2.0], dmatrix![0.5]).unwrap();
        let rho = [0.4];
        let cl = lower_lft(&mixed_sensitivity_plant(&g, &w).unwrap(), &LpvModel::from_lti(&k, g.params.clone()))
            .unwrap()
            .freeze(&rho)
            .unwrap();
        let gf = g.freeze(&rho).unwrap();
        for om in [0.01, 0.3, 1.0, 7.0] {
            let gj = gf.freq_response(om).unwrap()[(0, 0)];
            let kj = k.freq_response(om).unwrap()[(0, 0)];
            let s = (nalgebra::Complex::new(1.0, 0.0) + gj * kj).inv();
            let we = w.we.freq_response(om).unwrap()[(0, 0)];
            let t = cl.freq_response(om).unwrap();
            assert!((t[(0, 0)] - we * s).norm() < 1e-10);
            assert!((t[(1, 0)] - kj * s * 0.1).norm() < 1e-10);
        }
    }

    #[test]
    fn reduction_plant_reproduces_reduce() {
        let g = build_msd::<f64>(&MsdConfig::new(3, 1)).unwrap();
        let mut cfg = ReductionConfig::new(2, g.params.grid(3));
        cfg.multistart = 2;
        cfg.max_iterations = 15;
        let mask = StructureMask::full(2, 1, 1, 1);
        let r = reduce(&g, &cfg, &mask).unwrap();
        let (start, _) = reduction_start(&g, &mask).unwrap();
        let (s, _) = synthesize_controller(&generalized_plant(&g), &mask, &cfg, Some(&start)).unwrap();
        assert_eq!(s.k, r.g_red);
        assert_eq!(s.history, r.history);
        assert_eq!(s.grid_error, r.grid_error);
    }

    #[test]
    fn double_integrator_design_is_grid_stable() {
        let sys = LtiStateSpace::new(dmatrix![0.0, 1.0; 0.0, 0.0], dmatrix![0.0; 1.0], dmatrix![1.0, 0.0], dmatrix![0.0]).unwrap();
        let mut g = LpvModel::from_lti(&sys, ParameterBox::unit(1));
        g.a.term_mut(1)[(1, 0)] = -0.2;
        let grid = g.params.grid(3);
        let w = Weights::default();
        let p = mixed_sensitivity_plant(&g, &w).unwrap();
        let mut cfg = ReductionConfig::new(3, grid.clone());
        cfg.multistart = 2;
        cfg.max_iterations = 15;
        let (s, _) = synthesize_controller(&p, &StructureMask::full(3, 1, 1, 1), &cfg, None).unwrap();
        let rep = validate(&g, &s.k, &w, &grid, &ValidationOptions::default()).unwrap();
        assert!(rep.stable_on_grid());
        assert!(rep.weighted_hinf.unwrap() <= s.grid_error * (1.0 + 1e-6) + 1e-9);
    }

    #[test]
    fn zero_controller_is_open_loop() {
        let g = build_msd::<f64>(&MsdConfig::new(2, 1)).unwrap();
        let k = LpvModel::from_lti(&LtiStateSpace::static_gain(dmatrix![0.0]), g.params.clone());
        let grid = vec![vec![0.0]];
        let rep = validate(&g, &k, &Weights::default(), &grid, &ValidationOptions::default()).unwrap();
        assert!(rep.stable_on_grid());
        let open = spectral_abscissa(&g.freeze(&[0.0]).unwrap().a).unwrap();
        assert!((rep.points[0].abscissa - open).abs() < 1e-12);
        // u = 0, so the output never leaves zero
        let m = rep.points[0].metrics.as_ref().unwrap();
        assert_eq!(m.steady_state_error, 1.0);
    }

    #[test]
    fn closed_loop_poles_are_assembled_matrix_eigenvalues() {
        let g = build_msd::<f64>(&MsdConfig::new(2, 1)).unwrap();
        let k = LtiStateSpace::new(dmatrix![-1e-4], dmatrix![0.2], dmatrix![1.0], dmatrix![0.0]).unwrap();
        let kl = LpvModel::from_lti(&k, g.params.clone());
        let rep = validate(&g, &kl, &Weights::default(), &[vec![0.5]], &ValidationOptions::default()).unwrap();
        let cl = lower_lft(&tracking_plant(&g).unwrap(), &kl).unwrap().freeze(&[0.5]).unwrap();
        assert_eq!(rep.points[0].abscissa, spectral_abscissa(&cl.a).unwrap());
    }

    #[test]
    fn metrics_of_first_order_lag() {
        let dt = 0.01;
        let y: Vec<f64> = (0..2000).map(|k| 1.0 - (-(k as f64) * dt).exp()).collect();
        let m = step_metrics(&y, dt, 1.0);
        assert_eq!(m.overshoot, 0.0);
        assert!((m.settling_time - 50f64.ln()).abs() < 0.02, "{}", m.settling_time);
        assert!((m.rise_time - 9f64.ln()).abs() < 0.02);
    }
}
