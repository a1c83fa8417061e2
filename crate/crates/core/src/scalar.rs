//! Scalar abstraction shared by the analytic modules.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point type the analytic layer is generic over (`f32` or `f64`).
///
/// Tolerances throughout the crate are tuned for `f64`; `f32` works for the
/// scale-function layer at correspondingly looser accuracy.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Converts an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    /// Lossy conversion to `f64` for reporting and simulation.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Machine epsilon of the type.
    #[inline]
    fn eps() -> Self {
        Self::epsilon()
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// `(e^{a h} - 1) / a`, continuous at `a = 0` where it equals `h`.
#[inline]
pub fn expm1_over<S: Real>(a: S, h: S) -> S {
    if a == S::zero() {
        h
    } else {
        (a * h).exp_m1() / a
    }
}
