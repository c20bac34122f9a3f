//! Scalar abstraction: the solver is generic over the floating-point type.

use num_traits::{Float, FromPrimitive};
use std::fmt::{Debug, Display, LowerExp};

/// Floating-point scalar the solver works over: `f32` or `f64`.
pub trait Real:
    Float + FromPrimitive + Debug + Display + LowerExp + Send + Sync + 'static
{
    /// Shorthand for lossy conversion from an `f64` literal.
    #[inline]
    fn c(v: f64) -> Self {
        Self::from_f64(v).expect("literal not representable in scalar type")
    }

    /// Lossy view as f64, for diagnostics and reports.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// One half, as a scalar.
#[inline]
pub fn half<T: Real>() -> T {
    T::c(0.5)
}

/// Two, as a scalar.
#[inline]
pub fn two<T: Real>() -> T {
    T::c(2.0)
}
