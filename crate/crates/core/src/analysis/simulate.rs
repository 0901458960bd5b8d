use super::eig::eigenvalues;
use super::response::Trajectory;
use crate::error::{Error, Result};
use crate::model::LpvModel;
use crate::scalar::Scalar;
use nalgebra::{ComplexField, DMatrix, DVector};

/// Fixed-step RK4 simulation of `xdot = A(rho) x + B(rho) u` from `x = 0`.
///
/// `rho` and `u` are linearly interpolated between samples; the output is
/// `y = C(rho) x + D(rho) u` at every sample instant.
pub fn simulate<T: Scalar>(
    model: &LpvModel<T>,
    rho_traj: &Trajectory<T>,
    u_traj: &Trajectory<T>,
) -> Result<Trajectory<T>> {
    if rho_traj.dt != u_traj.dt || rho_traj.len() != u_traj.len() {
        return Err(Error::Dimension(
            "scheduling and input trajectories must share dt and length".into(),
        ));
    }
    if rho_traj.channels() != model.n_rho() || u_traj.channels() != model.n_u() {
        return Err(Error::Dimension(format!(
            "trajectories have {} / {} channels, model expects {} / {}",
            rho_traj.channels(),
            u_traj.channels(),
            model.n_rho(),
            model.n_u()
        )));
    }
    let steps = rho_traj.len();
    for k in 0..steps {
        model.params.check(&rho_traj.row(k))?;
    }
    let dt = rho_traj.dt;
    warn_if_stiff(model, dt);

    let half = T::lit(0.5);
    let sample = |k: usize| -> (Vec<T>, DVector<T>) {
        (rho_traj.row(k), DVector::from_vec(u_traj.row(k)))
    };
    let deriv = |rho: &[T], u: &DVector<T>, x: &DVector<T>| -> DVector<T> {
        model.a.eval(rho) * x + model.b.eval(rho) * u
    };

    let mut x = DVector::<T>::zeros(model.n_x());
    let mut y = DMatrix::zeros(steps, model.n_y());
    for k in 0..steps {
        let (rho0, u0) = sample(k);
        let yk = model.c.eval(&rho0) * &x + model.d.eval(&rho0) * &u0;
        y.set_row(k, &yk.transpose());
        if k + 1 == steps {
            break;
        }
        let (rho1, u1) = sample(k + 1);
        let rho_mid: Vec<T> = rho0.iter().zip(&rho1).map(|(a, b)| (*a + *b) * half).collect();
        let u_mid = (&u0 + &u1) * half;
        let k1 = deriv(&rho0, &u0, &x);
        let k2 = deriv(&rho_mid, &u_mid, &(&x + &k1 * (dt * half)));
        let k3 = deriv(&rho_mid, &u_mid, &(&x + &k2 * (dt * half)));
        let k4 = deriv(&rho1, &u1, &(&x + &k3 * dt));
        x += (k1 + (k2 + k3) * T::lit(2.0) + k4) * (dt / T::lit(6.0));
    }
    Trajectory::new(dt, y)
}

fn warn_if_stiff<T: Scalar>(model: &LpvModel<T>, dt: T) {
    let points = if model.n_rho() <= 3 {
        model.params.grid(5)
    } else {
        model.params.vertices().unwrap_or_default()
    };
    let fastest = points
        .iter()
        .filter_map(|rho| eigenvalues(&model.a.eval(rho)).ok())
        .flatten()
        .fold(T::zero(), |m, l| m.max(l.modulus()));
    if dt * fastest > T::lit(0.1) {
        log::warn!(
            "simulation step {} is coarse for eigenvalue magnitude {} (dt*|lambda| = {})",
            dt.as_f64(),
            fastest.as_f64(),
            (dt * fastest).as_f64()
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::step_response;
    use crate::bench::{build_msd, MsdConfig};

    #[test]
    fn zero_input_zero_output() {
        let g = build_msd::<f64>(&MsdConfig::new(3, 1)).unwrap();
        let rho = Trajectory::constant(0.01, 100, &[0.5]).unwrap();
        let u = Trajectory::constant(0.01, 100, &[0.0]).unwrap();
        let y = simulate(&g, &rho, &u).unwrap();
        assert!(y.samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_rho_matches_frozen_step() {
        let g = build_msd::<f64>(&MsdConfig::new(3, 1)).unwrap();
        let (dt, horizon) = (1e-3, 20.0);
        let n = (horizon / dt) as usize + 1;
        let y = simulate(
            &g,
            &Trajectory::constant(dt, n, &[-0.5]).unwrap(),
            &Trajectory::constant(dt, n, &[1.0]).unwrap(),
        )
        .unwrap();
        let reference = step_response(&g.freeze(&[-0.5]).unwrap(), horizon, dt).unwrap();
        let dev = (&y.samples - &reference.samples).amax();
        assert!(dev < 1e-6, "dev {dev}");
    }

    #[test]
    fn fourth_order_convergence() {
        let g = build_msd::<f64>(&MsdConfig::new(3, 1)).unwrap();
        let horizon = 10.0;
        let run = |dt: f64| {
            let n = (horizon / dt).round() as usize + 1;
            let y = simulate(
                &g,
                &Trajectory::constant(dt, n, &[0.3]).unwrap(),
                &Trajectory::constant(dt, n, &[1.0]).unwrap(),
            )
            .unwrap();
            y.samples[(n - 1, 0)]
        };
        let exact = step_response(&g.freeze(&[0.3]).unwrap(), horizon, 0.1).unwrap();
        let exact = exact.samples[(exact.len() - 1, 0)];
        let (e1, e2) = ((run(0.2) - exact).abs(), (run(0.1) - exact).abs());
        let ratio = e1 / e2;
        assert!((8.0..=32.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn mismatched_trajectories_rejected() {
        let g = build_msd::<f64>(&MsdConfig::new(2, 1)).unwrap();
        let rho = Trajectory::constant(0.01, 10, &[0.0]).unwrap();
        let u = Trajectory::constant(0.02, 10, &[1.0]).unwrap();
        assert!(simulate(&g, &rho, &u).is_err());
        let rho = Trajectory::constant(0.01, 10, &[2.0]).unwrap();
        let u = Trajectory::constant(0.01, 10, &[1.0]).unwrap();
        assert!(matches!(simulate(&g, &rho, &u), Err(Error::OutOfRange { .. })));
    }
}
