use crate::error::{Error, Result};
use crate::scalar::Scalar;
use nalgebra::{Complex, DMatrix, Schur};

/// Eigenvalues of a real square matrix via the real Schur form.
pub fn eigenvalues<T: Scalar>(a: &DMatrix<T>) -> Result<Vec<Complex<T>>> {
    if a.nrows() != a.ncols() {
        return Err(Error::Dimension(format!("eigenvalues of {:?} matrix", a.shape())));
    }
    if a.is_empty() {
        return Ok(Vec::new());
    }
    if !a.iter().all(|x| x.is_finite()) {
        return Err(Error::Numerical("non-finite entries in eigenvalue problem".into()));
    }
    let n = a.nrows();
    let schur = Schur::try_new(a.clone(), T::eps(), 200 * n.max(10))
        .ok_or_else(|| Error::Numerical(format!("Schur iteration did not converge ({n}x{n})")))?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// `max Re(lambda)`; `-inf` for an empty matrix.
pub fn spectral_abscissa<T: Scalar>(a: &DMatrix<T>) -> Result<T> {
    Ok(eigenvalues(a)?
        .iter()
        .fold(T::lit(f64::NEG_INFINITY), |m, l| m.max(l.re)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn diagonal_and_oscillator() {
        assert_eq!(spectral_abscissa(&dmatrix![-1.0, 0.0; 0.0, -2.0]).unwrap(), -1.0);
        assert!(spectral_abscissa(&dmatrix![0.0f64, 1.0; -1.0, 0.0]).unwrap().abs() < 1e-15);
    }

    #[test]
    fn non_square_rejected() {
        assert!(spectral_abscissa(&DMatrix::<f64>::zeros(2, 3)).is_err());
    }

    #[test]
    fn benchmark_grid_is_stable() {
        let g = crate::bench::build_msd::<f64>(&crate::bench::MsdConfig::default()).unwrap();
        for r in [-1.0, -0.5, 0.0, 0.5, 1.0] {
            assert!(spectral_abscissa(&g.freeze(&[r]).unwrap().a).unwrap() < 0.0);
        }
    }
}
