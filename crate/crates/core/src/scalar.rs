use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point element type of every tensor in the crate: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Lower clamp applied to probabilities before taking a logarithm.
    fn prob_floor() -> Self;

    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("f64 converts to any float type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("float converts to f64")
    }
}

impl Scalar for f32 {
    fn prob_floor() -> Self {
        1e-12
    }
}

impl Scalar for f64 {
    fn prob_floor() -> Self {
        1e-12
    }
}

/// Cast a literal into the scalar type.
#[inline]
pub(crate) fn lit<T: Scalar>(v: f64) -> T {
    T::from_f64_lossy(v)
}
