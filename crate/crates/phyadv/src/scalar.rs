//! Scalar abstraction: all core math is generic over the float width.
//!
//! `f32` is the production scalar (it matches the on-disk weight and dataset
//! formats); `f64` is used wherever extra precision matters, e.g. the
//! finite-difference gradient checks in the test suite.

use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};

/// Floating-point scalar usable throughout the tensor engine, the channel
/// simulations and the attacks.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssignOps
    + Default
    + std::fmt::Debug
    + std::fmt::Display
    + Send
    + Sync
    + 'static
{
    /// Convert a finite `f64` constant (or RNG draw) into this scalar.
    fn from_f64_c(value: f64) -> Self {
        Self::from_f64(value).expect("finite f64 representable as scalar")
    }

    /// Widen to `f64` for accumulation and reporting.
    fn to_f64_c(self) -> f64 {
        self.to_f64().expect("scalar representable as f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
