//! Scalar abstraction: every numeric routine in this crate is generic over a
//! floating-point type implementing [`Float`].

use num_traits::{FloatConst, FromPrimitive, NumAssign};
use std::fmt::{Debug, Display};

/// Floating-point scalar (`f32`, `f64`).
///
/// Blanket-implemented for anything satisfying the `num-traits` bounds, so
/// downstream code only ever names this one trait.
pub trait Float:
    num_traits::Float + FloatConst + NumAssign + FromPrimitive + Debug + Display + Send + Sync + 'static
{
    /// Lift an `f64` literal into the scalar type.
    fn c(v: f64) -> Self {
        Self::from_f64(v).expect("literal not representable in scalar type")
    }
}

impl<T> Float for T where
    T: num_traits::Float
        + FloatConst
        + NumAssign
        + FromPrimitive
        + Debug
        + Display
        + Send
        + Sync
        + 'static
{
}

/// Two-pi as a scalar.
pub fn two_pi<F: Float>() -> F {
    F::PI() + F::PI()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literal_lift_roundtrips() {
        assert_eq!(f64::c(1.5), 1.5);
        assert_eq!(f32::c(0.25), 0.25f32);
        assert_eq!(two_pi::<f64>(), std::f64::consts::TAU);
    }
}
