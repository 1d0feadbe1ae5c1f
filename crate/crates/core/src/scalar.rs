//! Scalar abstraction for physical signal values.
//!
//! Physical values, scale factors, offsets and gateway transforms are all
//! expressed in a type implementing [`Scalar`]. Floating point (`f32`, `f64`)
//! and exact rationals ([`crate::Rational`]) are supported.

use std::fmt::Debug;

use num_rational::Ratio;
use num_traits::{FromPrimitive, Num, Signed, ToPrimitive};

/// Numeric type usable as a physical signal value.
pub trait Scalar:
    Num + Signed + Copy + PartialOrd + Debug + FromPrimitive + ToPrimitive + 'static
{
    /// Round to the nearest integer, half-way cases away from zero.
    fn round_half_away(self) -> Self;

    /// Exact conversion of a raw bus integer into the scalar domain.
    fn from_raw(raw: i128) -> Option<Self> {
        Self::from_i128(raw)
    }

    /// Rounded integer value, `None` when it does not fit an `i128`.
    fn to_raw(self) -> Option<i128> {
        self.round_half_away().to_i128()
    }
}

impl Scalar for f32 {
    fn round_half_away(self) -> Self {
        self.round()
    }

    fn to_raw(self) -> Option<i128> {
        if !self.is_finite() {
            return None;
        }
        self.round().to_i128()
    }
}

impl Scalar for f64 {
    fn round_half_away(self) -> Self {
        self.round()
    }

    fn to_raw(self) -> Option<i128> {
        if !self.is_finite() {
            return None;
        }
        self.round().to_i128()
    }
}

impl Scalar for Ratio<i64> {
    fn round_half_away(self) -> Self {
        self.round()
    }
}

impl Scalar for Ratio<i128> {
    fn round_half_away(self) -> Self {
        self.round()
    }
}
