//! Scalar abstraction shared by every numerical routine in the crate.

use nalgebra::RealField;
use num_traits::ToPrimitive;
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real floating-point type the model is computed in (`f32` or `f64`).
///
/// Everything `nalgebra` needs comes from [`RealField`]; conversions to and
/// from `f64` literals go through `num-traits`.
pub trait Scalar:
    RealField + Copy + ToPrimitive + Default + Serialize + DeserializeOwned
{
}

impl<T> Scalar for T where
    T: RealField + Copy + ToPrimitive + Default + Serialize + DeserializeOwned
{
}

/// Converts an `f64` constant into `T`.
#[inline]
pub fn lit<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("f64 literal representable in scalar type")
}

/// Converts a count into `T`.
#[inline]
pub fn count<T: Scalar>(n: usize) -> T {
    T::from_usize(n).expect("count representable in scalar type")
}

/// Lossy conversion to `f64` for reporting.
#[inline]
pub fn to_f64<T: Scalar>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}
