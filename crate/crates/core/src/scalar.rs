//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar the geometry is generic over (`f32` or `f64`).
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Debug + Display + LowerExp + Default + Sum + Send + Sync + 'static
{
    /// Converts an `f64` literal into this scalar.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    /// Converts to `f64` for reporting.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Absolute tolerance for sum constraints (normalization, zero-sum).
    ///
    /// `1e-12` in double precision; widened to a small multiple of machine
    /// epsilon for lower precisions.
    fn sum_tol() -> Self {
        Self::lit(1e-12).max(Self::epsilon() * Self::lit(128.0))
    }

    /// Relative singular-value threshold used for rank decisions.
    fn default_rank_tol() -> Self {
        Self::lit(1e-8).max(Self::epsilon() * Self::lit(16.0))
    }
}

impl Real for f32 {}
impl Real for f64 {}

pub(crate) fn max_abs<T: Real>(xs: &[T]) -> T {
    xs.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
}

pub(crate) fn l1_norm<T: Real>(xs: &[T]) -> T {
    xs.iter().map(|x| x.abs()).sum()
}
