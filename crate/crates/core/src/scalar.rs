use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign};

/// Real floating-point scalar the matrix kernel and covariance recursions are
/// generic over. Implemented for `f32` and `f64`.
pub trait Scalar:
    Float + FromPrimitive + NumAssign + Sum + Debug + Display + LowerExp + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal into this scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    /// Threshold below which a reciprocal condition number counts as singular.
    fn singular_rcond() -> Self {
        Self::lit(1e-12).max(Self::epsilon() * Self::lit(10.0))
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
