//! Scalar special functions: normal quantile, χ² tail probabilities and
//! log-gamma.

use crate::error::{Error, Result};
use statrs::function::gamma;

pub use statrs::function::gamma::ln_gamma;

/// Standard normal quantile, Wichura's AS 241 (PPND16). Relative accuracy is
/// about 1e-16 over the open unit interval.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("normal quantile needs 0 < p < 1, got {p}")));
    }
    Ok(ppnd16(p))
}

fn poly(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

const A: [f64; 8] = [
    3.387_132_872_796_366_608,
    1.331_416_678_917_843_774_5e2,
    1.971_590_950_306_551_442_7e3,
    1.373_169_376_550_946_112_5e4,
    4.592_195_393_154_987_145_7e4,
    6.726_577_092_700_870_085_3e4,
    3.343_057_558_358_812_810_5e4,
    2.509_080_928_730_122_672_7e3,
];
const B: [f64; 8] = [
    1.0,
    4.231_333_070_160_091_125_2e1,
    6.871_870_074_920_579_083e2,
    5.394_196_021_424_751_107_7e3,
    2.121_379_430_158_659_586_7e4,
    3.930_789_580_009_271_061e4,
    2.872_908_573_572_194_267_4e4,
    5.226_495_278_852_854_561e3,
];
const C: [f64; 8] = [
    1.423_437_110_749_683_577_34,
    4.630_337_846_156_545_295_9,
    5.769_497_221_460_691_405_5,
    3.647_848_324_763_204_605_04,
    1.270_458_252_452_368_382_58,
    2.417_807_251_774_506_117_7e-1,
    2.272_384_498_926_918_458_33e-2,
    7.745_450_142_783_414_076_4e-4,
];
const D: [f64; 8] = [
    1.0,
    2.053_191_626_637_758_821_87,
    1.676_384_830_183_803_849_4,
    6.897_673_349_851_000_045_5e-1,
    1.481_039_764_274_800_745_9e-1,
    1.519_866_656_361_645_719_66e-2,
    5.475_938_084_995_344_946e-4,
    1.050_750_071_644_416_843_24e-9,
];
const E: [f64; 8] = [
    6.657_904_643_501_103_777_2,
    5.463_784_911_164_114_369_9,
    1.784_826_539_917_291_335_8,
    2.965_605_718_285_048_912_3e-1,
    2.653_218_952_657_612_309_3e-2,
    1.242_660_947_388_078_438_6e-3,
    2.711_555_568_743_487_578_15e-5,
    2.010_334_399_292_288_132_65e-7,
];
const F: [f64; 8] = [
    1.0,
    5.998_322_065_558_879_376_9e-1,
    1.369_298_809_227_358_053_1e-1,
    1.487_536_129_085_061_485_25e-2,
    7.868_691_311_456_132_591e-4,
    1.846_318_317_510_054_681_8e-5,
    1.421_511_758_316_445_888_7e-7,
    2.044_263_103_389_939_785_64e-15,
];

fn ppnd16(p: f64) -> f64 {
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180_625 - q * q;
        return q * poly(&A, r) / poly(&B, r);
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let r = (-tail.ln()).sqrt();
    let value = if r <= 5.0 {
        let r = r - 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        let r = r - 5.0;
        poly(&E, r) / poly(&F, r)
    };
    if q < 0.0 {
        -value
    } else {
        value
    }
}

/// Uses the libm `erfc`; the statrs error function is only good to about
/// 1e-11.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Upper tail `P(X > x)` of the χ² distribution with `dof` degrees of freedom.
pub fn chi2_sf(x: f64, dof: u32) -> Result<f64> {
    if dof == 0 {
        return Err(Error::Domain("chi-square needs at least one degree of freedom".into()));
    }
    if x.is_nan() {
        return Err(Error::Domain("chi-square argument is NaN".into()));
    }
    if x <= 0.0 {
        return Ok(1.0);
    }
    if x == f64::INFINITY {
        return Ok(0.0);
    }
    Ok(gamma::gamma_ur(0.5 * dof as f64, 0.5 * x))
}

/// The point `x` with `chi2_sf(x, dof) == alpha`, found by bisection.
pub fn chi2_upper_quantile(alpha: f64, dof: u32) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("tail probability must lie in (0, 1), got {alpha}")));
    }
    let mut hi = dof as f64 + 1.0;
    while chi2_sf(hi, dof)? > alpha {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if chi2_sf(mid, dof)? > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bisect_quantile(p: f64) -> f64 {
        let (mut lo, mut hi) = (-40.0_f64, 40.0_f64);
        for _ in 0..400 {
            let mid = 0.5 * (lo + hi);
            // compare in the tail where the cdf is representable accurately
            let below = if mid < 0.0 {
                normal_cdf(mid) < p
            } else {
                0.5 * libm::erfc(mid / std::f64::consts::SQRT_2) > 1.0 - p
            };
            if below {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn normal_quantile_matches_bisection() {
        for &p in &[1e-12, 1e-6, 0.001, 0.025, 0.1, 0.3, 0.5, 0.7, 0.9, 0.975, 0.999] {
            let z = normal_quantile(p).unwrap();
            let oracle = bisect_quantile(p);
            assert!((z - oracle).abs() < 1e-9 * oracle.abs().max(1.0), "p={p}: {z} vs {oracle}");
        }
        assert_eq!(normal_quantile(0.5).unwrap(), 0.0);
        assert!((normal_quantile(0.975).unwrap() - 1.959_963_984_540_054).abs() < 1e-14);
    }

    #[test]
    fn normal_quantile_rejects_endpoints() {
        assert!(normal_quantile(0.0).is_err());
        assert!(normal_quantile(1.0).is_err());
        assert!(normal_quantile(f64::NAN).is_err());
    }

    #[test]
    fn chi2_sf_at_zero_is_one() {
        for dof in 1..6 {
            assert_eq!(chi2_sf(0.0, dof).unwrap(), 1.0);
        }
    }

    #[test]
    fn chi2_two_dof_is_exponential() {
        for &t in &[0.1, 1.0, 2.5, 10.0, 40.0] {
            let sf = chi2_sf(t, 2).unwrap();
            let exact = (-t / 2.0).exp();
            assert!((sf - exact).abs() <= 1e-14 * exact.max(1e-300) + 1e-300, "{t}");
        }
    }

    #[test]
    fn chi2_one_dof_critical_value_by_quadrature() {
        // ∫_x^∞ density via u = sqrt(t): density dt = 2u f(u²) du, with
        // f(t) = t^{-1/2} e^{-t/2} / sqrt(2π), so the integrand is
        // 2 e^{-u²/2}/sqrt(2π). Composite Simpson on [sqrt(x), 12].
        let x: f64 = 3.841;
        let (a, b, m) = (x.sqrt(), 12.0_f64, 20_000);
        let h = (b - a) / m as f64;
        let f = |u: f64| 2.0 * (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mut s = f(a) + f(b);
        for i in 1..m {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * h);
        }
        let oracle = s * h / 3.0;
        let sf = chi2_sf(x, 1).unwrap();
        assert!((sf - oracle).abs() < 1e-9);
        assert!((sf - 0.05).abs() < 1e-3);
    }

    #[test]
    fn chi2_sf_domain_and_monotonicity() {
        assert!(chi2_sf(1.0, 0).is_err());
        assert_eq!(chi2_sf(f64::INFINITY, 3).unwrap(), 0.0);
        let mut prev = 1.0;
        for i in 1..200 {
            let v = chi2_sf(i as f64 * 0.2, 5).unwrap();
            assert!(v < prev && v > 0.0);
            prev = v;
        }
    }

    #[test]
    fn chi2_quantile_inverts_sf() {
        let q = chi2_upper_quantile(0.05, 1).unwrap();
        let z = normal_quantile(0.975).unwrap();
        assert!((q - z * z).abs() < 1e-10);
        for dof in 1..8 {
            let q = chi2_upper_quantile(0.01, dof).unwrap();
            assert!((chi2_sf(q, dof).unwrap() - 0.01).abs() < 1e-12);
        }
    }
}
