//! Scalar abstraction so the whole stack runs on f32 or f64.

use std::fmt::{Display, LowerExp};

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};
use rustfft::FftNum;

/// Floating-point scalar used by grids, fields, solvers and steppers.
///
/// `FftNum` ties the same scalar into the spectral transforms.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + NumAssign + FftNum + Display + LowerExp + Default
{
    /// Convert an f64 literal (coefficients, tolerances) into this scalar.
    fn of(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("finite f64 literal")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar representable as f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}
