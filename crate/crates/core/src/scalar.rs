//! Floating-point abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Real scalar: `f32` or `f64`.
///
/// Adds the log-gamma function, which `num_traits::Float` does not provide.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    fn ln_gamma(self) -> Self;

    /// Lossy conversion from `f64`; used for literals.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    #[inline]
    fn from_count(n: u64) -> Self {
        Self::from_u64(n).expect("count representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f64 {
    #[inline]
    fn ln_gamma(self) -> Self {
        statrs::function::gamma::ln_gamma(self)
    }
}

impl Real for f32 {
    #[inline]
    fn ln_gamma(self) -> Self {
        statrs::function::gamma::ln_gamma(f64::from(self)) as f32
    }
}

/// `x ln x` with the `0 ln 0 = 0` limit.
#[inline]
pub fn xlnx<T: Real>(x: T) -> T {
    if x <= T::zero() {
        T::zero()
    } else {
        x * x.ln()
    }
}

/// Numerically stable `ln(e^a + e^b)`.
#[inline]
pub fn log_add_exp<T: Real>(a: T, b: T) -> T {
    if a == T::neg_infinity() {
        return b;
    }
    if b == T::neg_infinity() {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Numerically stable `ln Σ e^x`.
pub fn log_sum_exp<T: Real>(xs: &[T]) -> T {
    let max = xs.iter().copied().fold(T::neg_infinity(), T::max);
    if max == T::neg_infinity() || max.is_infinite() {
        return max;
    }
    let s: T = xs.iter().map(|&x| (x - max).exp()).sum();
    max + s.ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_gamma_integers() {
        assert!((Real::ln_gamma(5.0f64) - 24.0f64.ln()).abs() < 1e-12);
        assert!(Real::ln_gamma(1.0f64).abs() < 1e-14);
        assert!((Real::ln_gamma(5.0f32) - 24.0f32.ln()).abs() < 1e-5);
    }

    #[test]
    fn log_sum_exp_matches_direct() {
        let xs = [0.1f64, -2.0, 1.5];
        let direct = xs.iter().map(|x| x.exp()).sum::<f64>().ln();
        assert!((log_sum_exp(&xs) - direct).abs() < 1e-14);
        assert!((log_add_exp(0.1, 1.5) - (0.1f64.exp() + 1.5f64.exp()).ln()).abs() < 1e-14);
        assert_eq!(log_sum_exp::<f64>(&[]), f64::NEG_INFINITY);
    }

    #[test]
    fn xlnx_zero_limit() {
        assert_eq!(xlnx(0.0f64), 0.0);
        assert!((xlnx(std::f64::consts::E) - std::f64::consts::E).abs() < 1e-15);
    }
}
