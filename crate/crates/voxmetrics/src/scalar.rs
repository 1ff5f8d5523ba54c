//! Floating-point scalar abstraction for the numeric kernels.
//!
//! Volume data, interpolation, and the special functions are generic over
//! [`Real`] so the same code runs at f32 or f64 precision. The pipeline
//! itself works at f64 (see the crate-root aliases).

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar: f32 or f64.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + std::fmt::Debug + std::fmt::Display + Send + Sync + 'static
{
    /// Lossless-as-possible conversion from f64 (rounds for f32).
    fn from_f64_lossy(x: f64) -> Self;

    /// Widening conversion to f64 (exact for f32 and f64).
    fn to_f64_lossy(self) -> f64;
}

impl Real for f32 {
    #[inline]
    fn from_f64_lossy(x: f64) -> Self {
        x as f32
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        f64::from(self)
    }
}

impl Real for f64 {
    #[inline]
    fn from_f64_lossy(x: f64) -> Self {
        x
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self
    }
}
