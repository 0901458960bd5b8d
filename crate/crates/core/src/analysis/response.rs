use super::hinf::sigma_at;
use crate::error::{Error, Result};
use crate::model::LtiStateSpace;
use crate::scalar::Scalar;
use nalgebra::DMatrix;
use std::io::Write;

/// Strictly increasing positive frequencies in rad/s.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid<T: Scalar> {
    frequencies: Vec<T>,
}

impl<T: Scalar> FrequencyGrid<T> {
    pub fn new(frequencies: Vec<T>) -> Result<Self> {
        if frequencies.is_empty() {
            return Err(Error::InvalidArgument("empty frequency grid".into()));
        }
        if !(frequencies[0] > T::zero()) || frequencies.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument(
                "frequencies must be positive and strictly increasing".into(),
            ));
        }
        Ok(Self { frequencies })
    }

    /// `n` log-spaced points from `lo` to `hi` inclusive.
    pub fn logspace(lo: T, hi: T, n: usize) -> Result<Self> {
        if !(lo > T::zero() && hi > lo) || n < 2 {
            return Err(Error::InvalidArgument("logspace needs 0 < lo < hi, n >= 2".into()));
        }
        let (a, b) = (lo.ln(), hi.ln());
        Self::new(
            (0..n)
                .map(|k| (a + (b - a) * T::lit(k as f64 / (n - 1) as f64)).exp())
                .collect(),
        )
    }

    pub fn frequencies(&self) -> &[T] {
        &self.frequencies
    }
}

/// Uniformly sampled signals: one row per sample, one column per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T: Scalar> {
    pub dt: T,
    pub samples: DMatrix<T>,
}

impl<T: Scalar> Trajectory<T> {
    pub fn new(dt: T, samples: DMatrix<T>) -> Result<Self> {
        if !(dt > T::zero()) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        Ok(Self { dt, samples })
    }

    /// Same value in every sample.
    pub fn constant(dt: T, steps: usize, value: &[T]) -> Result<Self> {
        let m = DMatrix::from_fn(steps, value.len(), |_, j| value[j]);
        Self::new(dt, m)
    }

    pub fn len(&self) -> usize {
        self.samples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.nrows() == 0
    }

    pub fn channels(&self) -> usize {
        self.samples.ncols()
    }

    pub fn time(&self, k: usize) -> T {
        self.dt * T::lit(k as f64)
    }

    pub fn row(&self, k: usize) -> Vec<T> {
        self.samples.row(k).iter().copied().collect()
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        let times: Vec<T> = (0..self.len()).map(|k| self.time(k)).collect();
        write_csv(w, "t", &times, &self.samples)
    }
}

/// Writes `label, ch1, ch2, ...` followed by one row per abscissa value.
pub fn write_csv<T: Scalar, W: Write>(
    w: &mut W,
    label: &str,
    abscissa: &[T],
    values: &DMatrix<T>,
) -> std::io::Result<()> {
    write!(w, "{label}")?;
    for j in 0..values.ncols() {
        write!(w, ",ch{}", j + 1)?;
    }
    writeln!(w)?;
    for (k, x) in abscissa.iter().enumerate() {
        write!(w, "{:e}", x.as_f64())?;
        for j in 0..values.ncols() {
            write!(w, ",{:e}", values[(k, j)].as_f64())?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Row `k` holds the singular values of `G(j omega_k)`, descending.
pub fn sigma_response<T: Scalar>(sys: &LtiStateSpace<T>, grid: &FrequencyGrid<T>) -> Result<DMatrix<T>> {
    let k = sys.n_u().min(sys.n_y());
    let freqs = grid.frequencies();
    let mut out = DMatrix::zeros(freqs.len(), k);
    for (row, &w) in freqs.iter().enumerate() {
        if k == 1 {
            out[(row, 0)] = sigma_at(sys, w)?;
            continue;
        }
        let g = sys.freq_response(w)?;
        let mut sv: Vec<T> = g.singular_values().iter().copied().collect();
        sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for (j, s) in sv.into_iter().enumerate() {
            out[(row, j)] = s;
        }
    }
    Ok(out)
}

/// Unit-step responses via exact zero-order-hold discretization.
///
/// Column `j * n_y + i` holds output `i` for a step on input `j`; row `k`
/// is time `k * dt`, covering `[0, horizon]`.
pub fn step_response<T: Scalar>(sys: &LtiStateSpace<T>, horizon: T, dt: T) -> Result<Trajectory<T>> {
    if !(dt > T::zero()) || horizon < dt {
        return Err(Error::InvalidArgument(format!(
            "step response needs dt > 0 and horizon >= dt (dt = {dt}, horizon = {horizon})"
        )));
    }
    let steps = (horizon / dt + T::lit(1e-9)).floor().to_usize().unwrap_or(0) + 1;
    let (n, m, p) = (sys.n_x(), sys.n_u(), sys.n_y());
    let mut aug = DMatrix::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(&sys.a);
    aug.view_mut((0, n), (n, m)).copy_from(&sys.b);
    let phi = if n > 0 { (aug * dt).exp() } else { DMatrix::identity(m, m) };
    let ad = phi.view((0, 0), (n, n)).into_owned();
    let bd = phi.view((0, n), (n, m)).into_owned();

    let mut out = DMatrix::zeros(steps, m * p);
    for j in 0..m {
        let mut x = nalgebra::DVector::<T>::zeros(n);
        let bj = bd.column(j).into_owned();
        let dj = sys.d.column(j).into_owned();
        for k in 0..steps {
            let y = &sys.c * &x + &dj;
            for i in 0..p {
                out[(k, j * p + i)] = y[i];
            }
            x = &ad * &x + &bj;
        }
    }
    Trajectory::new(dt, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::spectral_abscissa;
    use crate::testing::random_stable;
    use nalgebra::dmatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn lag() -> LtiStateSpace<f64> {
        LtiStateSpace::new(dmatrix![-1.0], dmatrix![1.0], dmatrix![1.0], dmatrix![0.0]).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(FrequencyGrid::<f64>::new(vec![]).is_err());
        assert!(FrequencyGrid::new(vec![1.0, 1.0]).is_err());
        assert!(FrequencyGrid::new(vec![0.0, 1.0]).is_err());
        let g = FrequencyGrid::<f64>::logspace(0.01, 100.0, 5).unwrap();
        assert!((g.frequencies()[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sigma_static_and_lag() {
        let d = dmatrix![3.0, 0.0; 0.0, -2.0];
        let s = sigma_response(&LtiStateSpace::static_gain(d), &FrequencyGrid::new(vec![0.1, 10.0]).unwrap()).unwrap();
        assert_eq!(s, dmatrix![3.0, 2.0; 3.0, 2.0]);
        let s = sigma_response(&lag(), &FrequencyGrid::new(vec![1.0]).unwrap()).unwrap();
        assert!((s[(0, 0)] - 0.5f64.sqrt()).abs() < 1e-15);
    }

    // controllable canonical form checked against direct polynomial evaluation
    #[test]
    fn siso_polynomial_oracle() {
        // G(s) = (2 s^2 + 3 s + 1) / (s^3 + 4 s^2 + 5 s + 2) + 0.5
        let num = [1.0, 3.0, 2.0];
        let den = [2.0, 5.0, 4.0, 1.0];
        let sys = LtiStateSpace::new(
            dmatrix![0.0, 1.0, 0.0; 0.0, 0.0, 1.0; -2.0, -5.0, -4.0],
            dmatrix![0.0; 0.0; 1.0],
            dmatrix![1.0, 3.0, 2.0],
            dmatrix![0.5],
        )
        .unwrap();
        let grid = FrequencyGrid::logspace(1e-3, 1e3, 50).unwrap();
        let s = sigma_response(&sys, &grid).unwrap();
        for (k, &w) in grid.frequencies().iter().enumerate() {
            let jw = nalgebra::Complex::new(0.0, w);
            let poly = |c: &[f64]| c.iter().rev().fold(nalgebra::Complex::new(0.0, 0.0), |acc, &x| acc * jw + x);
            let g = poly(&num) / poly(&den) + 0.5;
            assert!((s[(k, 0)] - g.norm()).abs() < 1e-10);
        }
    }

    #[test]
    fn step_of_static_and_lag() {
        let tr = step_response(&LtiStateSpace::static_gain(dmatrix![2.0]), 1.0, 0.1).unwrap();
        assert!(tr.samples.iter().all(|&y| y == 2.0));
        let tr = step_response(&lag(), 2.0, 0.01).unwrap();
        assert_eq!(tr.len(), 201);
        assert!((tr.samples[(100, 0)] - (1.0 - (-1.0f64).exp())).abs() < 1e-9);
    }

    #[test]
    fn step_final_value_is_dc_gain() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sys = random_stable(&mut rng, 5, 2, 1);
        let alpha = spectral_abscissa(&sys.a).unwrap();
        let horizon = 50.0 / alpha.abs();
        let tr = step_response(&sys, horizon, horizon / 2000.0).unwrap();
        let dc = sys.dc_gain().unwrap();
        let last = tr.len() - 1;
        for j in 0..2 {
            assert!((tr.samples[(last, j)] - dc[(0, j)]).abs() < 1e-6);
        }
    }

    #[test]
    fn csv_layout() {
        let tr = Trajectory::new(0.5, dmatrix![1.0, 2.0; 3.0, 4.0]).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,ch1,ch2");
        assert_eq!(lines[2], "5e-1,3e0,4e0");
    }
}
