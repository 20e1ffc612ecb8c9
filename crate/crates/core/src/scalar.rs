//! Floating-point scalar abstraction shared by the solver modules.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point: f32 or f64.
pub trait Scalar: Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static {
    /// Converts an `f64` literal. Values out of range saturate to ±inf.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).unwrap_or_else(|| {
            if x < 0.0 {
                Self::neg_infinity()
            } else {
                Self::infinity()
            }
        })
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::lit(n as f64)
    }

    /// Lossy conversion used for reporting.
    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// `ln(4^b)` without forming the power.
#[inline]
pub(crate) fn ln_weight<T: Scalar>(bit: usize) -> T {
    T::from_usize_lossy(2 * bit) * T::LN_2()
}

/// The significance weight `4^b`.
#[inline]
pub(crate) fn weight<T: Scalar>(bit: usize) -> T {
    T::lit(4.0f64.powi(bit as i32))
}
