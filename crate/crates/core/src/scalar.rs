//! Scalar abstraction shared by every numerical routine in the crate.

use nalgebra::{Complex, RealField};
use num_traits::{FromPrimitive, ToPrimitive};
use std::fmt::{Debug, Display};

/// Real floating-point scalar (`f32` or `f64`).
///
/// Everything numeric in this crate is generic over `Scalar`; the crate root
/// exposes `f64` aliases for the common case.
pub trait Scalar:
    RealField + Copy + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static
{
    /// Converts an `f64` literal into the scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    /// Lossless (for `f64`) conversion used by serialization.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn eps() -> Self {
        Self::default_epsilon()
    }

    #[inline]
    fn cplx(re: Self, im: Self) -> Complex<Self> {
        Complex::new(re, im)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
