//! Standard normal CDF and quantile, generic over the scalar type.
//!
//! CDF follows West's double-precision Hart rational approximation; the
//! quantile is Acklam's approximation polished with one Halley step against
//! the CDF, which brings it to near machine precision in `f64`.

use crate::scalar::Scalar;

/// Lower-tail standard normal CDF.
pub fn norm_cdf<T: Scalar>(x: T) -> T {
    let z = x.abs();
    let c37 = T::c(37.0);
    let lower = if z > c37 {
        T::zero()
    } else {
        let e = (-z * z / T::c(2.0)).exp();
        if z < T::c(7.071_067_811_865_47) {
            let mut num = T::c(3.526_249_659_989_11e-2) * z + T::c(0.700_383_064_443_688);
            num = num * z + T::c(6.373_962_203_531_65);
            num = num * z + T::c(33.912_866_078_383);
            num = num * z + T::c(112.079_291_497_871);
            num = num * z + T::c(221.213_596_169_931);
            num = num * z + T::c(220.206_867_912_376);
            let mut den = T::c(8.838_834_764_831_84e-2) * z + T::c(1.755_667_163_182_64);
            den = den * z + T::c(16.064_177_579_207);
            den = den * z + T::c(86.780_732_202_946_1);
            den = den * z + T::c(296.564_248_779_674);
            den = den * z + T::c(637.333_633_378_831);
            den = den * z + T::c(793.826_512_519_948);
            den = den * z + T::c(440.413_735_824_752);
            e * num / den
        } else {
            let mut b = z + T::c(0.65);
            b = z + T::c(4.0) / b;
            b = z + T::c(3.0) / b;
            b = z + T::c(2.0) / b;
            b = z + T::c(1.0) / b;
            e / b / T::c(2.506_628_274_631_000_5)
        }
    };
    if x > T::zero() {
        T::one() - lower
    } else {
        lower
    }
}

/// Standard normal quantile (inverse CDF). Returns ±∞ at p ∈ {0, 1} and NaN
/// outside [0, 1].
pub fn norm_quantile<T: Scalar>(p: T) -> T {
    if p < T::zero() || p > T::one() {
        return T::nan();
    }
    if p == T::zero() {
        return T::neg_infinity();
    }
    if p == T::one() {
        return T::infinity();
    }
    if p == T::c(0.5) {
        return T::zero();
    }

    // Acklam's rational approximation.
    let a = [
        T::c(-3.969_683_028_665_376e1),
        T::c(2.209_460_984_245_205e2),
        T::c(-2.759_285_104_469_687e2),
        T::c(1.383_577_518_672_690e2),
        T::c(-3.066_479_806_614_716e1),
        T::c(2.506_628_277_459_239),
    ];
    let b = [
        T::c(-5.447_609_879_822_406e1),
        T::c(1.615_858_368_580_409e2),
        T::c(-1.556_989_798_598_866e2),
        T::c(6.680_131_188_771_972e1),
        T::c(-1.328_068_155_288_572e1),
    ];
    let c = [
        T::c(-7.784_894_002_430_293e-3),
        T::c(-3.223_964_580_411_365e-1),
        T::c(-2.400_758_277_161_838),
        T::c(-2.549_732_539_343_734),
        T::c(4.374_664_141_464_968),
        T::c(2.938_163_982_698_783),
    ];
    let d = [
        T::c(7.784_695_709_041_462e-3),
        T::c(3.224_671_290_700_398e-1),
        T::c(2.445_134_137_142_996),
        T::c(3.754_408_661_907_416),
    ];
    let p_low = T::c(0.02425);

    let x = if p < p_low {
        let q = (T::c(-2.0) * p.ln()).sqrt();
        (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5])
            / ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + T::one())
    } else if p <= T::one() - p_low {
        let q = p - T::c(0.5);
        let r = q * q;
        (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q
            / (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + T::one())
    } else {
        let q = (T::c(-2.0) * (T::one() - p).ln()).sqrt();
        -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5])
            / ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + T::one())
    };

    // One Halley step: e = Φ(x) − p, u = e / φ(x).
    let e = norm_cdf(x) - p;
    let pdf = (-x * x / T::c(2.0)).exp() / T::c(2.506_628_274_631_000_5);
    if pdf > T::zero() {
        let u = e / pdf;
        x - u / (T::one() + x * u / T::c(2.0))
    } else {
        x
    }
}
