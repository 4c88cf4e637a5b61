//! Floating point scalar abstraction shared by every numeric module.

use std::fmt::Debug;
use std::iter::Sum;

use ndarray::NdFloat;
use num_traits::{FloatConst, FromPrimitive, ToPrimitive};

/// floating point: f32 or f64
pub trait Scalar:
    NdFloat + FromPrimitive + ToPrimitive + FloatConst + Default + Sum + Debug + 'static
{
    /// Lossy conversion from `f64`, used for literals and config values.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
