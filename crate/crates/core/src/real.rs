//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point scalar: `f32` or `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal into this scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Hyperbolic secant squared, safe for large arguments.
#[inline]
pub fn sech2<F: Real>(x: F) -> F {
    let ax = Float::abs(x);
    // sech^2(x) = 4 e^{-2|x|} / (1 + e^{-2|x|})^2
    let e = Float::exp(-(ax + ax));
    let one = F::one();
    let four = F::lit(4.0);
    four * e / ((one + e) * (one + e))
}

/// Hyperbolic cotangent. Not defined at zero.
#[inline]
pub fn coth<F: Real>(x: F) -> F {
    F::one() / Float::tanh(x)
}
