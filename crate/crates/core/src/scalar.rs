//! Scalar abstraction.
//!
//! All numeric kernels are generic over the floating point type; `f64` is
//! what the CLI uses and what the concrete aliases at the crate root pick.

use std::fmt;

/// Floating point scalar the library is generic over.
pub trait Real:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::NumAssign
    + fmt::Debug
    + fmt::Display
    + fmt::LowerExp
    + serde::Serialize
    + serde::de::DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn of(x: f64) -> Self {
        <Self as num_traits::NumCast>::from(x).expect("literal not representable")
    }

    /// Lossy conversion to `f64` for reporting.
    fn as_f64(self) -> f64 {
        <f64 as num_traits::NumCast>::from(self).unwrap_or(f64::NAN)
    }

    /// Conversion from a (small) unsigned integer.
    fn of_usize(x: usize) -> Self {
        <Self as num_traits::NumCast>::from(x).expect("count not representable")
    }
}

impl Real for f32 {}
impl Real for f64 {}
