//! Scalar abstraction shared by the numerical modules.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point scalar the copula and regression code is written against: `f32` or `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Default
    + Sum
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Distance kept from 0 and 1 when copula-scale arguments are clamped.
    ///
    /// `1e-10` for `f64`; wider for `f32`, where `1 - 1e-10` rounds to one.
    fn boundary_eps() -> Self {
        let tiny = lit::<Self>(1e-10);
        let floor = Self::epsilon() * lit(4.0);
        if tiny > floor {
            tiny
        } else {
            floor
        }
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Converts an `f64` literal into `T`.
#[inline]
pub fn lit<T: FromPrimitive>(x: f64) -> T {
    T::from_f64(x).expect("f64 literal representable in scalar type")
}

#[inline]
pub fn to_f64<T: ToPrimitive>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Clamps a copula-scale value into `[eps, 1 - eps]`.
#[inline]
pub fn clamp_unit<T: Real>(u: T) -> T {
    let eps = T::boundary_eps();
    let hi = T::one() - eps;
    if u.is_nan() {
        u
    } else if u < eps {
        eps
    } else if u > hi {
        hi
    } else {
        u
    }
}

/// `ln(exp(a) + exp(b))` without overflow.
#[inline]
pub fn log_add_exp<T: Real>(a: T, b: T) -> T {
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    if hi == T::neg_infinity() {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundary_eps_per_type() {
        assert_eq!(f64::boundary_eps(), 1e-10);
        let e32 = f32::boundary_eps();
        assert!(e32 > 1e-10 && 1.0 - e32 < 1.0);
    }

    #[test]
    fn clamp_keeps_interior() {
        assert_eq!(clamp_unit(0.3f64), 0.3);
        assert_eq!(clamp_unit(0.0f64), 1e-10);
        assert_eq!(clamp_unit(1.0f64), 1.0 - 1e-10);
    }

    #[test]
    fn log_add_exp_large() {
        let v = log_add_exp(1000.0f64, 1000.0);
        assert!((v - (1000.0 + 2f64.ln())).abs() < 1e-12);
    }
}
