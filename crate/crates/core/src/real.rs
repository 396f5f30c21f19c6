//! Scalar abstraction shared by every numeric routine in the crate.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real floating-point scalar (`f32` or `f64`) used by the simulation engines.
///
/// The bound is deliberately a `nalgebra::RealField` plus the `num-traits`
/// conversion traits, so that complex matrices `DMatrix<Complex<T>>` get the
/// full nalgebra decomposition toolbox.
pub trait Real:
    RealField
    + Copy
    + FromPrimitive
    + ToPrimitive
    + std::fmt::LowerExp
    + Send
    + Sync
    + 'static
{
    /// Machine epsilon of the scalar type.
    fn epsilon() -> Self;
}

impl Real for f32 {
    fn epsilon() -> Self {
        f32::EPSILON
    }
}

impl Real for f64 {
    fn epsilon() -> Self {
        f64::EPSILON
    }
}

/// Converts an `f64` literal into the working scalar.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    nalgebra::convert(x)
}

/// Converts a count into the working scalar.
#[inline]
pub fn from_usize<T: Real>(n: usize) -> T {
    T::from_usize(n).expect("count representable as a float")
}

/// Widens the working scalar to `f64` for reporting.
#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}
