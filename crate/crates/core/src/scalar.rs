//! Real-number types the geometry routines are generic over.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point scalar: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    fn from_u32_exact(v: u32) -> Self {
        <Self as FromPrimitive>::from_u32(v).expect("u32 is representable in every float type")
    }

    fn from_i64_lossy(v: i64) -> Self {
        <Self as FromPrimitive>::from_i64(v).expect("i64 is representable in every float type")
    }

    /// Round half away from zero and convert to `i64`.
    fn round_i64(self) -> i64 {
        self.round().to_i64().unwrap_or(if self.is_sign_negative() {
            i64::MIN
        } else {
            i64::MAX
        })
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
