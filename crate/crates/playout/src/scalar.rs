//! Scalar abstraction for the numeric core.

use core::fmt::Debug;

use num_traits::{Float, FromPrimitive};

/// Floating-point scalar the quality model, delay estimators and playout
/// deciders are generic over: `f32` or `f64`.
pub trait Scalar: Float + FromPrimitive + Debug + 'static {}

impl<T> Scalar for T where T: Float + FromPrimitive + Debug + 'static {}

/// Converts an `f64` constant into the working scalar type.
pub(crate) fn c<T: Scalar>(value: f64) -> T {
    T::from_f64(value).expect("constant representable in scalar type")
}
