//! Numeric element type for fixed fingerprints and forest thresholds.

use std::fmt::{Debug, Display};
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating-point scalar that fixed fingerprints and decision trees are built over.
///
/// Implemented for `f32` and `f64`. Feature values are small integers, so both
/// representations are exact for every value the extractor produces.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Serialize
    + DeserializeOwned
    + Debug
    + Display
    + FromStr
    + Default
    + Send
    + Sync
    + 'static
{
    /// Name recorded in model files.
    const NAME: &'static str;

    /// Midpoint between two values, used as a split threshold.
    fn midpoint(a: Self, b: Self) -> Self {
        a + (b - a) / (Self::one() + Self::one())
    }

    fn from_count(v: u32) -> Self {
        <Self as FromPrimitive>::from_u32(v).expect("u32 is representable")
    }
}

impl Scalar for f32 {
    const NAME: &'static str = "f32";
}

impl Scalar for f64 {
    const NAME: &'static str = "f64";
}
