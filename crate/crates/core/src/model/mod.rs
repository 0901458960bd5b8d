//! Parameter-dependent state-space models, their LFT form and the
//! interconnections that turn model reduction into controller synthesis.

mod interconnect;
mod lft;

pub use interconnect::{difference, generalized_plant, lower_lft, lower_lft_frozen, GeneralizedPlant};
pub use lft::LftModel;

use crate::error::{Error, Result};
use crate::linalg;
use crate::scalar::Scalar;
use nalgebra::{Complex, DMatrix};

/// Closed box of admissible scheduling values, one interval per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterBox<T: Scalar> {
    bounds: Vec<(T, T)>,
}

impl<T: Scalar> ParameterBox<T> {
    pub fn new(bounds: Vec<(T, T)>) -> Result<Self> {
        for (i, (lo, hi)) in bounds.iter().enumerate() {
            if !(lo <= hi) {
                return Err(Error::InvalidArgument(format!(
                    "parameter {i}: lower bound {lo} exceeds upper bound {hi}"
                )));
            }
        }
        Ok(Self { bounds })
    }

    /// `[-1, 1]^n_rho`.
    pub fn unit(n_rho: usize) -> Self {
        Self {
            bounds: vec![(-T::one(), T::one()); n_rho],
        }
    }

    pub fn n_rho(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(T, T)] {
        &self.bounds
    }

    pub fn center(&self) -> Vec<T> {
        self.bounds
            .iter()
            .map(|&(lo, hi)| (lo + hi) * T::lit(0.5))
            .collect()
    }

    pub fn check(&self, rho: &[T]) -> Result<()> {
        if rho.len() != self.n_rho() {
            return Err(Error::Dimension(format!(
                "rho has length {}, model has {} scheduling parameters",
                rho.len(),
                self.n_rho()
            )));
        }
        for (i, (&r, &(lo, hi))) in rho.iter().zip(&self.bounds).enumerate() {
            if !(r >= lo && r <= hi) {
                return Err(Error::OutOfRange {
                    index: i,
                    value: r.as_f64(),
                    lo: lo.as_f64(),
                    hi: hi.as_f64(),
                });
            }
        }
        Ok(())
    }

    pub fn contains(&self, rho: &[T]) -> bool {
        self.check(rho).is_ok()
    }

    /// Affine map of the box onto `[-1, 1]^n_rho`. Degenerate intervals map to 0.
    pub fn normalize(&self, rho: &[T]) -> Vec<T> {
        rho.iter()
            .zip(&self.bounds)
            .map(|(&r, &(lo, hi))| {
                let half = (hi - lo) * T::lit(0.5);
                if half > T::zero() {
                    (r - (lo + hi) * T::lit(0.5)) / half
                } else {
                    T::zero()
                }
            })
            .collect()
    }

    /// The `2^n_rho` corners, first parameter toggling fastest.
    pub fn vertices(&self) -> Result<Vec<Vec<T>>> {
        let n = self.n_rho();
        if n > 12 {
            return Err(Error::InvalidArgument(format!(
                "vertex enumeration limited to 12 parameters, got {n}"
            )));
        }
        Ok((0..1usize << n)
            .map(|mask| {
                self.bounds
                    .iter()
                    .enumerate()
                    .map(|(i, &(lo, hi))| if mask >> i & 1 == 1 { hi } else { lo })
                    .collect()
            })
            .collect())
    }

    /// Tensor grid with `points` uniformly spaced values per parameter
    /// (endpoints included), first parameter varying fastest. For
    /// `n_rho = 0` this is the single empty point.
    pub fn grid(&self, points: usize) -> Vec<Vec<T>> {
        let points = points.max(1);
        let axis = |lo: T, hi: T| -> Vec<T> {
            if points == 1 {
                return vec![(lo + hi) * T::lit(0.5)];
            }
            (0..points)
                .map(|k| lo + (hi - lo) * T::lit(k as f64 / (points - 1) as f64))
                .collect()
        };
        let axes: Vec<Vec<T>> = self.bounds.iter().map(|&(lo, hi)| axis(lo, hi)).collect();
        let total = points.pow(self.n_rho() as u32);
        (0..total)
            .map(|mut idx| {
                axes.iter()
                    .map(|ax| {
                        let v = ax[idx % points];
                        idx /= points;
                        v
                    })
                    .collect()
            })
            .collect()
    }
}

/// Matrix-valued affine function `M(rho) = M_0 + sum_i rho_i M_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMatrix<T: Scalar> {
    constant: DMatrix<T>,
    coeffs: Vec<DMatrix<T>>,
}

impl<T: Scalar> AffineMatrix<T> {
    pub fn new(constant: DMatrix<T>, coeffs: Vec<DMatrix<T>>) -> Result<Self> {
        for (i, c) in coeffs.iter().enumerate() {
            if c.shape() != constant.shape() {
                return Err(Error::Dimension(format!(
                    "coefficient {} is {:?}, constant term is {:?}",
                    i + 1,
                    c.shape(),
                    constant.shape()
                )));
            }
        }
        Ok(Self { constant, coeffs })
    }

    pub fn zeros(rows: usize, cols: usize, n_rho: usize) -> Self {
        Self {
            constant: DMatrix::zeros(rows, cols),
            coeffs: vec![DMatrix::zeros(rows, cols); n_rho],
        }
    }

    pub fn identity(n: usize, n_rho: usize) -> Self {
        Self::from_constant(DMatrix::identity(n, n), n_rho)
    }

    /// Parameter-independent matrix with `n_rho` zero coefficients.
    pub fn from_constant(m: DMatrix<T>, n_rho: usize) -> Self {
        let (r, c) = m.shape();
        Self {
            constant: m,
            coeffs: vec![DMatrix::zeros(r, c); n_rho],
        }
    }

    /// Builds from a full list of terms `[M_0, M_1, ..]`.
    pub fn from_terms(mut terms: Vec<DMatrix<T>>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::InvalidArgument("affine matrix needs a constant term".into()));
        }
        let constant = terms.remove(0);
        Self::new(constant, terms)
    }

    pub fn rows(&self) -> usize {
        self.constant.nrows()
    }

    pub fn cols(&self) -> usize {
        self.constant.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.constant.shape()
    }

    pub fn n_rho(&self) -> usize {
        self.coeffs.len()
    }

    pub fn constant(&self) -> &DMatrix<T> {
        &self.constant
    }

    pub fn coeffs(&self) -> &[DMatrix<T>] {
        &self.coeffs
    }

    /// Term `k`: the constant for `k = 0`, coefficient of `rho_k` otherwise.
    pub fn term(&self, k: usize) -> &DMatrix<T> {
        if k == 0 {
            &self.constant
        } else {
            &self.coeffs[k - 1]
        }
    }

    pub fn term_mut(&mut self, k: usize) -> &mut DMatrix<T> {
        if k == 0 {
            &mut self.constant
        } else {
            &mut self.coeffs[k - 1]
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = &DMatrix<T>> {
        std::iter::once(&self.constant).chain(self.coeffs.iter())
    }

    pub fn is_constant(&self) -> bool {
        self.coeffs.iter().all(linalg::is_zero)
    }

    pub fn is_zero(&self) -> bool {
        self.terms().all(linalg::is_zero)
    }

    pub fn eval(&self, rho: &[T]) -> DMatrix<T> {
        debug_assert_eq!(rho.len(), self.n_rho());
        let mut m = self.constant.clone();
        for (c, &r) in self.coeffs.iter().zip(rho) {
            if r != T::zero() {
                m += c * r;
            }
        }
        m
    }

    pub fn map_terms(&self, mut f: impl FnMut(&DMatrix<T>) -> DMatrix<T>) -> Self {
        Self {
            constant: f(&self.constant),
            coeffs: self.coeffs.iter().map(f).collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        self.map_terms(|m| m.transpose())
    }

    pub fn scale(&self, s: T) -> Self {
        self.map_terms(|m| m * s)
    }

    fn zip_terms(
        &self,
        other: &Self,
        what: &str,
        f: impl Fn(&DMatrix<T>, &DMatrix<T>) -> DMatrix<T>,
    ) -> Result<Self> {
        if self.n_rho() != other.n_rho() {
            return Err(Error::Dimension(format!(
                "{what}: {} vs {} scheduling parameters",
                self.n_rho(),
                other.n_rho()
            )));
        }
        Ok(Self {
            constant: f(&self.constant, &other.constant),
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::Dimension(format!(
                "add: {:?} + {:?}",
                self.shape(),
                other.shape()
            )));
        }
        self.zip_terms(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::Dimension(format!(
                "sub: {:?} - {:?}",
                self.shape(),
                other.shape()
            )));
        }
        self.zip_terms(other, "sub", |a, b| a - b)
    }

    /// Product that stays affine: at most one factor may depend on `rho`.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        if self.cols() != other.rows() {
            return Err(Error::Dimension(format!(
                "mul: {:?} * {:?}",
                self.shape(),
                other.shape()
            )));
        }
        if self.n_rho() != other.n_rho() {
            return Err(Error::Dimension("mul: scheduling parameter count".into()));
        }
        if self.is_zero() || other.is_zero() {
            return Ok(Self::zeros(self.rows(), other.cols(), self.n_rho()));
        }
        match (self.is_constant(), other.is_constant()) {
            (true, _) => Ok(other.map_terms(|m| &self.constant * m)),
            (_, true) => Ok(self.map_terms(|m| m * &other.constant)),
            _ => Err(Error::UnsupportedRational(format!(
                "{:?} x {:?} product",
                self.shape(),
                other.shape()
            ))),
        }
    }

    /// Left multiplication by a constant matrix.
    pub fn premul(&self, m: &DMatrix<T>) -> Self {
        self.map_terms(|t| m * t)
    }

    pub fn postmul(&self, m: &DMatrix<T>) -> Self {
        self.map_terms(|t| t * m)
    }

    pub fn hstack(parts: &[&Self]) -> Result<Self> {
        Self::stack(parts, true)
    }

    pub fn vstack(parts: &[&Self]) -> Result<Self> {
        Self::stack(parts, false)
    }

    fn stack(parts: &[&Self], horizontal: bool) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty stack".into()))?;
        let n_rho = first.n_rho();
        for p in parts {
            let ok = if horizontal {
                p.rows() == first.rows()
            } else {
                p.cols() == first.cols()
            };
            if !ok || p.n_rho() != n_rho {
                return Err(Error::Dimension(format!(
                    "stack: {:?} incompatible with {:?}",
                    p.shape(),
                    first.shape()
                )));
            }
        }
        let terms = (0..=n_rho)
            .map(|k| {
                let ms: Vec<&DMatrix<T>> = parts.iter().map(|p| p.term(k)).collect();
                if horizontal {
                    linalg::hstack(&ms)
                } else {
                    linalg::vstack(&ms)
                }
            })
            .collect();
        Self::from_terms(terms)
    }

    pub fn blockdiag(a: &Self, b: &Self) -> Result<Self> {
        a.zip_terms(b, "blockdiag", linalg::blockdiag)
    }

    /// Rows `r0..r0+nr`, columns `c0..c0+nc` of every term.
    pub fn sub_block(&self, r0: usize, c0: usize, nr: usize, nc: usize) -> Self {
        self.map_terms(|m| m.view((r0, c0), (nr, nc)).into_owned())
    }

    pub fn max_abs(&self) -> T {
        self.terms().fold(T::zero(), |acc, m| acc.max(m.amax()))
    }
}

/// Frozen (time-invariant) state-space realization.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiStateSpace<T: Scalar> {
    pub a: DMatrix<T>,
    pub b: DMatrix<T>,
    pub c: DMatrix<T>,
    pub d: DMatrix<T>,
}

impl<T: Scalar> LtiStateSpace<T> {
    pub fn new(a: DMatrix<T>, b: DMatrix<T>, c: DMatrix<T>, d: DMatrix<T>) -> Result<Self> {
        check_dims(a.shape(), b.shape(), c.shape(), d.shape())?;
        Ok(Self { a, b, c, d })
    }

    /// Static gain with no states.
    pub fn static_gain(d: DMatrix<T>) -> Self {
        let (ny, nu) = d.shape();
        Self {
            a: DMatrix::zeros(0, 0),
            b: DMatrix::zeros(0, nu),
            c: DMatrix::zeros(ny, 0),
            d,
        }
    }

    pub fn n_x(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_u(&self) -> usize {
        self.b.ncols()
    }

    pub fn n_y(&self) -> usize {
        self.c.nrows()
    }

    /// `C (sI - A)^{-1} B + D` at complex `s`.
    pub fn eval_at(&self, s: Complex<T>) -> Result<DMatrix<Complex<T>>> {
        let d = linalg::to_complex(&self.d);
        if self.n_x() == 0 {
            return Ok(d);
        }
        let n = self.n_x();
        let mut m = -linalg::to_complex(&self.a);
        for i in 0..n {
            m[(i, i)] += s;
        }
        let lu = m.lu();
        let x = lu
            .solve(&linalg::to_complex(&self.b))
            .ok_or(Error::SingularFrequency { omega: s.im.as_f64() })?;
        Ok(linalg::to_complex(&self.c) * x + d)
    }

    /// Frequency response at `j*omega`; `omega = inf` returns `D`.
    pub fn freq_response(&self, omega: T) -> Result<DMatrix<Complex<T>>> {
        if omega.is_finite() {
            self.eval_at(T::cplx(T::zero(), omega))
        } else {
            Ok(linalg::to_complex(&self.d))
        }
    }

    /// `D - C A^{-1} B`.
    pub fn dc_gain(&self) -> Result<DMatrix<T>> {
        if self.n_x() == 0 {
            return Ok(self.d.clone());
        }
        let x = self
            .a
            .clone()
            .lu()
            .solve(&self.b)
            .ok_or(Error::SingularFrequency { omega: 0.0 })?;
        Ok(&self.d - &self.c * x)
    }

    /// State transform `x = T z`: `(T^{-1} A T, T^{-1} B, C T, D)`.
    pub fn similarity(&self, t: &DMatrix<T>, t_inv: &DMatrix<T>) -> Self {
        Self {
            a: t_inv * &self.a * t,
            b: t_inv * &self.b,
            c: &self.c * t,
            d: self.d.clone(),
        }
    }
}

fn check_dims(
    a: (usize, usize),
    b: (usize, usize),
    c: (usize, usize),
    d: (usize, usize),
) -> Result<()> {
    let nx = a.0;
    if a.1 != nx || b.0 != nx || c.1 != nx || d.0 != c.0 || d.1 != b.1 {
        return Err(Error::Dimension(format!(
            "inconsistent realization: A {a:?}, B {b:?}, C {c:?}, D {d:?}"
        )));
    }
    Ok(())
}

/// LPV model with affine dependence on the scheduling vector.
#[derive(Debug, Clone, PartialEq)]
pub struct LpvModel<T: Scalar> {
    pub a: AffineMatrix<T>,
    pub b: AffineMatrix<T>,
    pub c: AffineMatrix<T>,
    pub d: AffineMatrix<T>,
    pub params: ParameterBox<T>,
}

impl<T: Scalar> LpvModel<T> {
    pub fn new(
        a: AffineMatrix<T>,
        b: AffineMatrix<T>,
        c: AffineMatrix<T>,
        d: AffineMatrix<T>,
        params: ParameterBox<T>,
    ) -> Result<Self> {
        check_dims(a.shape(), b.shape(), c.shape(), d.shape())?;
        let n_rho = params.n_rho();
        for (name, m) in [("A", &a), ("B", &b), ("C", &c), ("D", &d)] {
            if m.n_rho() != n_rho {
                return Err(Error::Dimension(format!(
                    "{name} has {} coefficients, parameter box has {n_rho}",
                    m.n_rho()
                )));
            }
        }
        Ok(Self { a, b, c, d, params })
    }

    /// Parameter-independent model over the given box.
    pub fn from_lti(sys: &LtiStateSpace<T>, params: ParameterBox<T>) -> Self {
        let n = params.n_rho();
        Self {
            a: AffineMatrix::from_constant(sys.a.clone(), n),
            b: AffineMatrix::from_constant(sys.b.clone(), n),
            c: AffineMatrix::from_constant(sys.c.clone(), n),
            d: AffineMatrix::from_constant(sys.d.clone(), n),
            params,
        }
    }

    pub fn n_x(&self) -> usize {
        self.a.rows()
    }

    pub fn n_u(&self) -> usize {
        self.b.cols()
    }

    pub fn n_y(&self) -> usize {
        self.c.rows()
    }

    pub fn n_rho(&self) -> usize {
        self.params.n_rho()
    }

    pub fn is_parameter_independent(&self) -> bool {
        [&self.a, &self.b, &self.c, &self.d]
            .iter()
            .all(|m| m.is_constant())
    }

    /// Evaluates the model at `rho`, which must lie in the (closed) box.
    pub fn freeze(&self, rho: &[T]) -> Result<LtiStateSpace<T>> {
        self.params.check(rho)?;
        Ok(self.freeze_unchecked(rho))
    }

    /// Evaluation without the box check, for deliberate extrapolation.
    ///
    /// Panics if `rho` has the wrong length.
    pub fn freeze_unchecked(&self, rho: &[T]) -> LtiStateSpace<T> {
        assert_eq!(rho.len(), self.n_rho(), "rho length");
        LtiStateSpace {
            a: self.a.eval(rho),
            b: self.b.eval(rho),
            c: self.c.eval(rho),
            d: self.d.eval(rho),
        }
    }

    /// Applies `x = T z` to every affine term.
    pub fn similarity(&self, t: &DMatrix<T>, t_inv: &DMatrix<T>) -> Self {
        Self {
            a: self.a.map_terms(|m| t_inv * m * t),
            b: self.b.premul(t_inv),
            c: self.c.postmul(t),
            d: self.d.clone(),
            params: self.params.clone(),
        }
    }

    /// Keeps the leading `n` states of every term.
    pub fn truncate(&self, n: usize) -> Self {
        let (nu, ny) = (self.n_u(), self.n_y());
        Self {
            a: self.a.sub_block(0, 0, n, n),
            b: self.b.sub_block(0, 0, n, nu),
            c: self.c.sub_block(0, 0, ny, n),
            d: self.d.clone(),
            params: self.params.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_model() -> LpvModel<f64> {
        let a = AffineMatrix::new(DMatrix::zeros(1, 1), vec![DMatrix::identity(1, 1)]).unwrap();
        let b = AffineMatrix::from_constant(DMatrix::from_element(1, 1, 1.0), 1);
        let c = AffineMatrix::from_constant(DMatrix::from_element(1, 1, 1.0), 1);
        let d = AffineMatrix::zeros(1, 1, 1);
        LpvModel::new(a, b, c, d, ParameterBox::unit(1)).unwrap()
    }

    #[test]
    fn freeze_scalar_affine() {
        let sys = scalar_model().freeze(&[0.3]).unwrap();
        assert_eq!(sys.a[(0, 0)], 0.3);
    }

    #[test]
    fn freeze_at_zero_gives_constant_terms() {
        let m = crate::bench::build_msd(&crate::bench::MsdConfig::new(3, 2)).unwrap();
        let sys = m.freeze(&[0.0, 0.0]).unwrap();
        assert_eq!(&sys.a, m.a.constant());
        assert_eq!(&sys.b, m.b.constant());
    }

    #[test]
    fn freeze_rejects_out_of_box_and_wrong_length() {
        let m = scalar_model();
        assert!(matches!(m.freeze(&[1.5]), Err(Error::OutOfRange { index: 0, .. })));
        assert!(matches!(m.freeze(&[0.0, 0.0]), Err(Error::Dimension(_))));
        // boundary is admissible
        assert!(m.freeze(&[1.0]).is_ok());
        assert_eq!(m.freeze_unchecked(&[2.0]).a[(0, 0)], 2.0);
    }

    #[test]
    fn model_dimension_checks() {
        let a = AffineMatrix::<f64>::zeros(2, 2, 1);
        let b = AffineMatrix::zeros(3, 1, 1);
        let c = AffineMatrix::zeros(1, 2, 1);
        let d = AffineMatrix::zeros(1, 1, 1);
        assert!(LpvModel::new(a.clone(), b, c.clone(), d.clone(), ParameterBox::unit(1)).is_err());
        let b = AffineMatrix::zeros(2, 1, 1);
        assert!(LpvModel::new(a, b, c, d, ParameterBox::unit(2)).is_err());
    }

    #[test]
    fn parameter_box_grid_and_vertices() {
        let p = ParameterBox::new(vec![(-1.0, 1.0), (0.0, 2.0)]).unwrap();
        let g = p.grid(5);
        assert_eq!(g.len(), 25);
        assert_eq!(g[0], vec![-1.0, 0.0]);
        assert_eq!(g[1], vec![-0.5, 0.0]);
        assert_eq!(g[24], vec![1.0, 2.0]);
        assert_eq!(p.vertices().unwrap().len(), 4);
        assert_eq!(p.normalize(&[0.0, 2.0]), vec![0.0, 1.0]);
        assert!(ParameterBox::new(vec![(1.0, 0.0)]).is_err());
        assert_eq!(ParameterBox::<f64>::unit(0).grid(5), vec![Vec::<f64>::new()]);
    }

    #[test]
    fn affine_product_rejects_two_varying_factors() {
        let m = scalar_model();
        assert!(matches!(m.a.mul(&m.a), Err(Error::UnsupportedRational(_))));
        let p = m.b.mul(&m.a).unwrap();
        assert_eq!(p.coeffs()[0][(0, 0)], 1.0);
    }

    #[test]
    fn generic_over_f32() {
        let a = AffineMatrix::<f32>::new(DMatrix::zeros(1, 1), vec![DMatrix::identity(1, 1)]).unwrap();
        assert_eq!(a.eval(&[0.25f32])[(0, 0)], 0.25f32);
    }
}
