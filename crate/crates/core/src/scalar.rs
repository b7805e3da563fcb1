//! Scalar abstraction for the numeric core.
//!
//! All tensor and engine math is generic over [`Scalar`] so the same code runs
//! in `f64` (the default everywhere) or `f32`. The simulation and verification
//! layers are pinned to `f64`: their acceptance tolerances are not reliable in
//! single precision.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive};

/// An IEEE float usable as the element type of the numeric core.
pub trait Scalar: Float + FromPrimitive + Debug + Display + Send + Sync + 'static {
    /// Lossy conversion from an `f64` constant (hyperparameter defaults,
    /// tolerances). Panics only for values outside the target type's range,
    /// which no constant in this crate is.
    fn from_config(value: f64) -> Self {
        Self::from_f64(value).expect("constant representable in scalar type")
    }
}

impl<T> Scalar for T where T: Float + FromPrimitive + Debug + Display + Send + Sync + 'static {}
