//! Scalar abstraction for the numeric kernel.

use num_traits::{Float, NumAssignOps, NumCast};
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating-point scalar the tensor kernel is generic over.
///
/// Implemented for `f32` and `f64`; the crate-level aliases pin `f64`.
pub trait Scalar:
    Float + NumAssignOps + Sum + Debug + Display + Default + Send + Sync + 'static
{
    fn from_f64(v: f64) -> Self {
        <Self as NumCast>::from(v).expect("f64 conversion")
    }

    fn to_f64(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).expect("finite scalar")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
