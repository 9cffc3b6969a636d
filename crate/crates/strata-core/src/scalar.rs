//! Scalar abstraction for the numeric kernels.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar the numeric code is generic over.
///
/// `f32` and `f64` implement it; everything downstream (distances, solver,
/// intervals) is written against this trait only.
pub trait Scalar:
    Float
    + NumAssign
    + FromPrimitive
    + ToPrimitive
    + LinalgScalar
    + ScalarOperand
    + Sum
    + Debug
    + Display
    + Send
    + Sync
    + serde::Serialize
    + serde::de::DeserializeOwned
    + 'static
{
    /// Lossy conversion from `f64`; used for literal constants.
    fn c(v: f64) -> Self {
        Self::from_f64(v).expect("constant representable in scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }

    /// `exp` accurate to ~1 ulp * 10; hot loops call this so concrete
    /// types can substitute a cheaper polynomial kernel.
    fn exp_fast(self) -> Self {
        self.exp()
    }
}

impl Scalar for f32 {}

impl Scalar for f64 {
    fn exp_fast(self) -> f64 {
        fast_exp64(self)
    }
}

/// `exp` via 2^k * exp(r) with |r| <= ln(2)/2 and a degree-12 Taylor tail;
/// relative error stays below ~1e-13 over the finite range.
#[inline]
pub fn fast_exp64(x: f64) -> f64 {
    if !(x.abs() <= 300.0) {
        // NaN and the extreme tails: defer to the library; the polynomial
        // kernel only covers the range hot loops actually visit.
        return x.exp();
    }
    const LOG2E: f64 = std::f64::consts::LOG2_E;
    // Cody-Waite split of ln(2): the high part has 20 trailing zero bits,
    // so k * LN2_HI is exact for the k this range produces.
    let ln2_hi = f64::from_bits(0x3FE6_2E42_FEE0_0000);
    let ln2_lo = f64::from_bits(0x3DEA_39EF_3579_3C76);
    let k = (x * LOG2E).round();
    let r = (x - k * ln2_hi) - k * ln2_lo;
    let mut p = 1.0 / 479_001_600.0;
    for &c in &[
        1.0 / 39_916_800.0,
        1.0 / 3_628_800.0,
        1.0 / 362_880.0,
        1.0 / 40_320.0,
        1.0 / 5_040.0,
        1.0 / 720.0,
        1.0 / 120.0,
        1.0 / 24.0,
        1.0 / 6.0,
        0.5,
        1.0,
        1.0,
    ] {
        p = p * r + c;
    }
    let bits = ((1023 + k as i64) as u64) << 52;
    f64::from_bits(bits) * p
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fast_exp_matches_library() {
        let mut x = -700.0f64;
        while x < 700.0 {
            let got = fast_exp64(x);
            let want = x.exp();
            let rel = ((got - want) / want).abs();
            assert!(rel < 2e-13, "x={x}: {got} vs {want} (rel {rel})");
            x += 0.37;
        }
        assert_eq!(fast_exp64(f64::NEG_INFINITY), 0.0);
        assert!(fast_exp64(f64::NAN).is_nan());
        assert_eq!(fast_exp64(1000.0), f64::INFINITY);
    }
}
