//! Scalar abstraction shared by every numeric component.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point element type usable by the tensor engine and the models.
///
/// Implemented for `f32` and `f64`. Experiments run in `f64`; `f32` exists for
/// cheaper inference and to keep the numeric code honest about conversions.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Default
    + Debug
    + Display
    + 'static
{
    /// Lossy conversion from `f64`; every literal in the crate goes through here.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 is representable in every Scalar")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Converts a slice of `f64` into any scalar type.
pub fn cast_slice<T: Scalar>(xs: &[f64]) -> Vec<T> {
    xs.iter().map(|&v| T::of(v)).collect()
}
