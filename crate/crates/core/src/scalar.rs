//! Floating-point scalar abstraction shared by the state algebra, the basis
//! walk and the estimators.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Real scalar type the qubit algebra is written against (`f32` or `f64`).
///
/// The two tolerances scale with the precision of the type: `algebra_tol`
/// bounds identities such as `C0 + C1 = I`, `unit_tol` bounds how far a
/// caller-supplied axis may stray from unit length.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    const ALGEBRA_TOL: f64;
    const UNIT_TOL: f64;

    fn algebra_tol() -> Self {
        Self::lit(Self::ALGEBRA_TOL)
    }

    fn unit_tol() -> Self {
        Self::lit(Self::UNIT_TOL)
    }

    /// Converts an `f64` literal; every `f64` is representable (possibly
    /// rounded) in the implementing types.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal fits scalar")
    }

    fn half() -> Self {
        Self::lit(0.5)
    }

    fn two() -> Self {
        Self::lit(2.0)
    }
}

impl Scalar for f64 {
    const ALGEBRA_TOL: f64 = 1e-12;
    const UNIT_TOL: f64 = 1e-9;
}

impl Scalar for f32 {
    const ALGEBRA_TOL: f64 = 1e-5;
    const UNIT_TOL: f64 = 1e-5;
}
