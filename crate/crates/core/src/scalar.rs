//! Floating-point abstraction shared by every simulator component.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Complex amplitude over the scalar type `T`.
pub type C<T> = Complex<T>;

/// Real scalar used for amplitudes, probabilities and angles.
///
/// Implemented for `f32` and `f64`. The tolerances scale with the precision of
/// the type, so that `f64` checks run at the 1e-10 level while `f32` stays usable.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Tolerance for unitarity, normalization and projector-completeness checks.
    fn tolerance() -> Self;

    /// Tolerance for Hermiticity of density matrices.
    fn hermitian_tolerance() -> Self;

    /// Converts an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    /// Converts a count or index.
    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable in scalar type")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    fn tolerance() -> f64 {
        1e-10
    }
    fn hermitian_tolerance() -> f64 {
        1e-12
    }
}

impl Scalar for f32 {
    fn tolerance() -> f32 {
        1e-4
    }
    fn hermitian_tolerance() -> f32 {
        1e-5
    }
}

/// `e^{i phi}`.
#[inline]
pub fn cis<T: Scalar>(phi: T) -> C<T> {
    Complex::new(phi.cos(), phi.sin())
}

/// The primitive root `e^{2 pi i k / d}`.
#[inline]
pub fn root_of_unity<T: Scalar>(k: i64, d: usize) -> C<T> {
    let k = k.rem_euclid(d as i64);
    cis(T::TAU() * T::lit(k as f64) / T::from_usize_lossy(d))
}

#[inline]
pub(crate) fn c_real<T: Scalar>(x: T) -> C<T> {
    Complex::new(x, T::zero())
}

#[inline]
pub(crate) fn c_zero<T: Scalar>() -> C<T> {
    Complex::new(T::zero(), T::zero())
}

#[inline]
pub(crate) fn c_one<T: Scalar>() -> C<T> {
    Complex::new(T::one(), T::zero())
}

#[inline]
pub(crate) fn is_finite<T: Scalar>(z: C<T>) -> bool {
    z.re.is_finite() && z.im.is_finite()
}

/// Wraps an angle into `[0, 2 pi)`.
pub fn wrap_angle<T: Scalar>(theta: T) -> T {
    let tau = T::TAU();
    let mut t = theta % tau;
    if t < T::zero() {
        t += tau;
    }
    if t >= tau {
        t -= tau;
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roots_of_unity_wrap_negative_exponents() {
        let a: C<f64> = root_of_unity(-1, 4);
        let b: C<f64> = root_of_unity(3, 4);
        assert!((a - b).norm() < 1e-15);
        assert!((root_of_unity::<f64>(1, 4) - Complex::new(0.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn wrap_angle_stays_in_range() {
        for x in [-7.0, -0.1, 0.0, 1.0, 6.3, 100.0] {
            let w = wrap_angle::<f64>(x);
            assert!((0.0..std::f64::consts::TAU).contains(&w));
            assert!(((w - x) / std::f64::consts::TAU).fract().abs() < 1e-9
                || (1.0 - ((w - x) / std::f64::consts::TAU).fract().abs()) < 1e-9);
        }
    }

    #[test]
    fn f32_is_supported() {
        let z: C<f32> = root_of_unity(1, 2);
        assert!((z.re + 1.0).abs() < 1e-6);
        assert!(f32::tolerance() > 0.0);
    }
}
