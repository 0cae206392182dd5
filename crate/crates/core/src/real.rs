//! Scalar abstraction shared by the deterministic parts of the crate.

use std::fmt::{Debug, LowerExp};
use std::iter::Sum;

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating point scalar usable by the potential, kernel and particle-flow code.
///
/// Implemented for `f32` and `f64`. Monte-Carlo estimators and the FFT-based
/// collision operator work in `f64` only.
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Sum + Debug + LowerExp + Send + Sync + 'static
{
    /// Converts an `f64` literal into `Self`.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }
}

impl Real for f32 {}
impl Real for f64 {}
