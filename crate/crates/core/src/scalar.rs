use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar the numerical layer is generic over.
///
/// Everything the resummation, energy and optimizer code needs from a float,
/// collected once. `f64` is the production type (see [`crate::Real`]); `f32`
/// exists so precision-sensitivity checks can run the same code at lower
/// precision.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + LowerExp
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossless-enough conversion from `f64` literals and stored constants.
    fn from_f64_lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal not representable in scalar type")
    }

    /// Widening conversion for error reporting and serialization.
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("scalar not representable as f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
