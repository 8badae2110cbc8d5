//! Scalar abstraction for the numeric core.
//!
//! Everything in the math modules is generic over [`Real`], which is any
//! floating-point type nalgebra can factorize (in practice `f32` or `f64`).
//! The crate root exposes `f64` aliases for the common types; `f64` is what
//! the benchmark and data pipelines use throughout.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Scalar type the numeric core is generic over.
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive {
    /// Lift an `f64` literal into `Self`. Panics only if the literal is not
    /// representable, which cannot happen for the finite constants used here.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    /// Lossy view as `f64`, for diagnostics and output formatting.
    fn as_f64(self) -> f64;

    fn is_finite_scalar(self) -> bool;
}

impl Real for f64 {
    fn as_f64(self) -> f64 {
        self
    }

    fn is_finite_scalar(self) -> bool {
        self.is_finite()
    }
}

impl Real for f32 {
    fn as_f64(self) -> f64 {
        self as f64
    }

    fn is_finite_scalar(self) -> bool {
        self.is_finite()
    }
}
