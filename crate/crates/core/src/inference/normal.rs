//! Standard normal distribution function and quantile.

use libm::erfc;
use std::f64::consts::SQRT_2;

use crate::error::{Error, Result};

/// `Φ(t)`.
pub fn normal_cdf(t: f64) -> f64 {
    0.5 * erfc(-t / SQRT_2)
}

/// Upper tail `1 − Φ(t)` without cancellation for large `t`.
pub fn normal_sf(t: f64) -> f64 {
    0.5 * erfc(t / SQRT_2)
}

/// `Φ⁻¹(u)` for `u ∈ (0, 1)`.
pub fn normal_quantile(u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::Domain(format!("normal quantile needs 0 < u < 1, got {u}")));
    }
    Ok(if u <= 0.5 { -upper(u) } else { upper(1.0 - u) })
}

/// `t` with `1 − Φ(t) = tail`, accurate for tiny tails.
pub fn normal_upper_quantile(tail: f64) -> Result<f64> {
    if !(tail > 0.0 && tail < 1.0) {
        return Err(Error::Domain(format!("upper-tail probability must lie in (0, 1), got {tail}")));
    }
    Ok(if tail <= 0.5 { upper(tail) } else { -upper(1.0 - tail) })
}

// Upper-tail quantile for tail ≤ 0.5: Wichura's AS 241 rational
// approximations, then one Halley step against erfc.
fn upper(tail: f64) -> f64 {
    let q = 0.5 - tail;
    // lower quantile Φ⁻¹(tail) ≤ 0
    let x = if q <= 0.425 {
        let r = 0.180625 - q * q;
        -q * poly(&A, r) / poly(&B, r)
    } else {
        let r = (-tail.ln()).sqrt();
        if r <= 5.0 {
            -poly(&C, r - 1.6) / poly(&D, r - 1.6)
        } else {
            -poly(&E, r - 5.0) / poly(&F, r - 5.0)
        }
    };
    let density = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    if density > 0.0 {
        let step = (normal_cdf(x) - tail) / density;
        -(x - step / (1.0 + 0.5 * x * step))
    } else {
        -x
    }
}

fn poly(coef: &[f64; 8], x: f64) -> f64 {
    coef.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

const A: [f64; 8] = [
    3.387_132_872_796_366_5,
    1.331_416_678_917_843_8e2,
    1.971_590_950_306_551_3e3,
    1.373_169_376_550_946e4,
    4.592_195_393_154_987e4,
    6.726_577_092_700_87e4,
    3.343_057_558_358_813e4,
    2.509_080_928_730_122_7e3,
];
const B: [f64; 8] = [
    1.0,
    4.231_333_070_160_091e1,
    6.871_870_074_920_579e2,
    5.394_196_021_424_751e3,
    2.121_379_430_158_659_7e4,
    3.930_789_580_009_271e4,
    2.872_908_573_572_194_3e4,
    5.226_495_278_852_545e3,
];
const C: [f64; 8] = [
    1.423_437_110_749_683_5,
    4.630_337_846_156_546,
    5.769_497_221_460_691,
    3.647_848_324_763_204_5,
    1.270_458_252_452_368_4,
    2.417_807_251_774_506e-1,
    2.272_384_498_926_918_4e-2,
    7.745_450_142_783_414e-4,
];
const D: [f64; 8] = [
    1.0,
    2.053_191_626_637_759,
    1.676_384_830_183_803_8,
    6.897_673_349_851e-1,
    1.481_039_764_274_800_8e-1,
    1.519_866_656_361_645_7e-2,
    5.475_938_084_995_345e-4,
    1.050_750_071_644_416_9e-9,
];
const E: [f64; 8] = [
    6.657_904_643_501_103,
    5.463_784_911_164_114,
    1.784_826_539_917_291_3,
    2.965_605_718_285_048_7e-1,
    2.653_218_952_657_612_4e-2,
    1.242_660_947_388_078_4e-3,
    2.711_555_568_743_487_6e-5,
    2.010_334_399_292_288_1e-7,
];
const F: [f64; 8] = [
    1.0,
    5.998_322_065_558_88e-1,
    1.369_298_809_227_358e-1,
    1.487_536_129_085_061_5e-2,
    7.868_691_311_456_133e-4,
    1.846_318_317_510_054_8e-5,
    1.421_511_758_316_446e-7,
    2.043_631_033_899_661_5e-15,
];

/// Two-sided p-value `2(1 − Φ(|t|))`.
pub fn two_sided_pvalue(t: f64) -> f64 {
    (2.0 * normal_sf(t.abs())).min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values from 50-digit mpmath evaluations.
    const CDF_TABLE: &[(f64, f64)] = &[
        (-8.0, 6.220960574271784e-16),
        (-3.0, 0.0013498980316300946),
        (-1.0, 0.15865525393145707),
        (0.5, 0.6914624612740131),
        (1.959964, 0.9750000009035576),
        (2.5, 0.9937903346742238),
        (4.0, 0.9999683287581669),
    ];

    #[test]
    fn cdf_reference_values() {
        assert_eq!(normal_cdf(0.0), 0.5);
        for &(t, p) in CDF_TABLE {
            assert!((normal_cdf(t) - p).abs() <= 1e-10, "Φ({t})");
        }
        assert!((normal_cdf(1.959964) - 0.975).abs() <= 1e-6);
    }

    #[test]
    fn quantile_reference_values() {
        assert!((normal_quantile(0.99).unwrap() - 2.3263478740408408).abs() <= 1e-10);
        assert!((normal_quantile(0.975).unwrap() - 1.959963984540054).abs() <= 1e-10);
        assert!((normal_quantile(1e-10).unwrap() + 6.361340902404056).abs() <= 1e-9);
        assert_eq!(normal_quantile(0.5).unwrap(), 0.0);
    }

    #[test]
    fn quantile_domain() {
        assert!(matches!(normal_quantile(0.0), Err(Error::Domain(_))));
        assert!(matches!(normal_quantile(1.0), Err(Error::Domain(_))));
        assert!(normal_quantile(f64::NAN).is_err());
    }

    #[test]
    fn round_trip() {
        // Φ(t) rounds to within 1.1e-16 of 1 for large t, so beyond t ≈ 5.5 the
        // forward direction loses the digits needed; the upper tail covers that side,
        // and mirrors the same loss below −5.5.
        let mut t = -8.0;
        while t <= 8.0 {
            if t <= 5.5 {
                let back = normal_quantile(normal_cdf(t)).unwrap();
                assert!((back - t).abs() <= 1e-8, "t={t}, back={back}");
            }
            if t >= -5.5 {
                let back = normal_upper_quantile(normal_sf(t)).unwrap();
                assert!((back - t).abs() <= 1e-8, "t={t}, back={back}");
            }
            t += 0.01;
        }
    }

    #[test]
    fn pvalues() {
        assert_eq!(two_sided_pvalue(0.0), 1.0);
        assert!((two_sided_pvalue(-1.959963984540054) - 0.05).abs() < 1e-12);
        assert!(two_sided_pvalue(3.0) < two_sided_pvalue(2.0));
    }
}
