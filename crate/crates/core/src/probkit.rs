//! Scalar probability kernels: univariate and bivariate standard normal
//! CDF/PDF/quantile and the partial derivatives used by the estimator.
//!
//! The bivariate CDF is a scalar port of the Drezner–Wesolowsky/Genz scheme
//! (selective Gauss–Legendre quadrature on the arcsine substitution, with an
//! asymptotic expansion for |rho| > 0.925). Absolute accuracy is well below
//! 1e-12 over |rho| <= 1 - 1e-8; the test suite pins this against a 2-D
//! quadrature oracle.

use crate::error::{Error, Result};

/// 1 / (2*pi)
const FRAC_1_TWO_PI: f64 = 0.159_154_943_091_895_34;
/// 1 / sqrt(2*pi)
const INV_SQRT_TWO_PI: f64 = 0.398_942_280_401_432_7;
/// sqrt(2*pi)
const SQRT_TWO_PI: f64 = 2.506_628_274_631_000_5;
/// Callers clamp correlations into [-CORR_BOUND, CORR_BOUND].
pub const CORR_BOUND: f64 = 1.0 - 1e-8;

/// A probability in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Prob(f64);

impl Prob {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && (0.0..=1.0).contains(&value) {
            Ok(Prob(value))
        } else {
            Err(Error::Domain(format!("probability must be in [0,1], got {value}")))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

/// A correlation strictly inside (-1, 1).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Corr(f64);

impl Corr {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && value.abs() < 1.0 {
            Ok(Corr(value))
        } else {
            Err(Error::Domain(format!("correlation must satisfy |rho| < 1, got {value}")))
        }
    }

    /// Clamp an arbitrary finite value into the supported interior
    /// [-(1 - 1e-8), 1 - 1e-8]. This is the caller-side boundary handling.
    #[inline]
    pub fn clamped(value: f64) -> Self {
        Corr(value.clamp(-CORR_BOUND, CORR_BOUND))
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

/// Standard normal CDF.
pub fn std_normal_cdf(x: f64) -> Result<Prob> {
    if !x.is_finite() {
        return Err(Error::Domain(format!("std_normal_cdf requires finite x, got {x}")));
    }
    Ok(Prob(phi(x)))
}

/// Standard normal quantile, inverse of [`std_normal_cdf`].
pub fn std_normal_quantile(p: f64) -> Result<f64> {
    if !(p.is_finite() && p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("std_normal_quantile requires p in (0,1), got {p}")));
    }
    Ok(phi_inv(p))
}

/// Bivariate standard normal CDF `P(X <= x, Y <= y)` under correlation `rho`.
pub fn bivariate_normal_cdf(x: f64, y: f64, rho: Corr) -> Result<Prob> {
    if !x.is_finite() || !y.is_finite() {
        return Err(Error::Domain(format!(
            "bivariate_normal_cdf requires finite arguments, got ({x}, {y})"
        )));
    }
    Ok(Prob(phi2(x, y, rho.0)))
}

/// Bivariate standard normal density at `(x, y)` under correlation `rho`.
/// By Plackett's identity this equals the partial derivative of the
/// bivariate CDF with respect to `rho`.
pub fn bivariate_normal_pdf(x: f64, y: f64, rho: Corr) -> Result<f64> {
    if !x.is_finite() || !y.is_finite() {
        return Err(Error::Domain(format!(
            "bivariate_normal_pdf requires finite arguments, got ({x}, {y})"
        )));
    }
    Ok(phi2_pdf(x, y, rho.0))
}

/// Gradient of the bivariate normal CDF.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BivariateGrad {
    pub d_x: f64,
    pub d_y: f64,
    pub d_rho: f64,
}

/// Partial derivatives of `bivariate_normal_cdf` in `x`, `y` and `rho`:
/// `d_x = phi(x) * Phi((y - rho x)/sqrt(1 - rho^2))`, symmetrically for `d_y`,
/// and `d_rho` is the bivariate density.
pub fn grad_bivariate_cdf(x: f64, y: f64, rho: Corr) -> Result<BivariateGrad> {
    if !x.is_finite() || !y.is_finite() {
        return Err(Error::Domain(format!(
            "grad_bivariate_cdf requires finite arguments, got ({x}, {y})"
        )));
    }
    let (d_x, d_y, d_rho) = phi2_grad(x, y, rho.0);
    Ok(BivariateGrad { d_x, d_y, d_rho })
}

// ---------------------------------------------------------------------------
// Unchecked kernels. Callers guarantee finite arguments and |rho| <= 1 - 1e-8.
// ---------------------------------------------------------------------------

/// Phi(x), standard normal CDF via erfc.
#[inline]
pub(crate) fn phi(x: f64) -> f64 {
    0.5 * libm::erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

/// phi(x), standard normal density.
#[inline]
pub(crate) fn phi_pdf(x: f64) -> f64 {
    INV_SQRT_TWO_PI * (-0.5 * x * x).exp()
}

/// Wichura's AS 241 (PPND16) rational approximations for the normal quantile.
pub(crate) fn phi_inv(p: f64) -> f64 {
    const A: [f64; 8] = [
        3.387_132_872_796_366_5,
        1.331_416_678_917_843_8e2,
        1.971_590_950_306_551_3e3,
        1.373_169_376_550_946_1e4,
        4.592_195_393_154_987_2e4,
        6.726_577_092_700_870_1e4,
        3.343_057_558_358_813e4,
        2.509_080_928_730_122_7e3,
    ];
    const B: [f64; 7] = [
        4.231_333_070_160_091e1,
        6.871_870_074_920_579e2,
        5.394_196_021_424_751e3,
        2.121_379_430_158_66e4,
        3.930_789_580_009_271e4,
        2.872_908_573_572_194_3e4,
        5.226_495_278_852_545_5e3,
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
    const D: [f64; 7] = [
        2.053_191_626_637_759,
        1.676_384_830_183_803_8,
        6.897_673_349_851e-1,
        1.481_039_764_274_800_8e-1,
        1.519_866_656_361_645_7e-2,
        5.475_938_084_995_345e-4,
        1.050_750_071_644_416_9e-9,
    ];
    const E: [f64; 8] = [
        6.657_904_643_501_103_8,
        5.463_784_911_164_114,
        1.784_826_539_917_291_3,
        2.965_605_718_285_048_7e-1,
        2.653_218_952_657_612_4e-2,
        1.242_660_947_388_078_4e-3,
        2.711_555_568_743_487_6e-5,
        2.010_334_399_292_288_1e-7,
    ];
    const F: [f64; 7] = [
        5.998_322_065_558_88e-1,
        1.369_298_809_227_358e-1,
        1.487_536_129_085_061_5e-2,
        7.868_691_311_456_132_6e-4,
        1.846_318_317_510_054_8e-5,
        1.421_511_758_316_446e-7,
        2.044_263_103_389_939_7e-15,
    ];

    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180_625 - q * q;
        let num = poly7(&A, r);
        let den = poly7_b(&B, r);
        return q * num / den;
    }
    let mut r = if q < 0.0 { p } else { 1.0 - p };
    r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        let r = r - 1.6;
        poly7(&C, r) / poly7_b(&D, r)
    } else {
        let r = r - 5.0;
        poly7(&E, r) / poly7_b(&F, r)
    };
    if q < 0.0 { -val } else { val }
}

#[inline]
fn poly7(c: &[f64; 8], x: f64) -> f64 {
    ((((((c[7] * x + c[6]) * x + c[5]) * x + c[4]) * x + c[3]) * x + c[2]) * x + c[1]) * x + c[0]
}

#[inline]
fn poly7_b(c: &[f64; 7], x: f64) -> f64 {
    ((((((c[6] * x + c[5]) * x + c[4]) * x + c[3]) * x + c[2]) * x + c[1]) * x + c[0]) * x + 1.0
}

/// Phi2(x, y, rho) = P(X <= x, Y <= y). Symmetric in (x, y) exactly as
/// computed: arguments are ordered canonically before evaluation.
#[inline]
pub(crate) fn phi2(x: f64, y: f64, rho: f64) -> f64 {
    debug_assert!(rho.abs() < 1.0);
    let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
    // P(X <= x, Y <= y) = P(X > -x, Y > -y) for a centered Gaussian.
    bvnd_upper(-lo, -hi, rho).clamp(0.0, 1.0)
}

/// Bivariate normal density.
#[inline]
pub(crate) fn phi2_pdf(x: f64, y: f64, rho: f64) -> f64 {
    let omr2 = (1.0 - rho) * (1.0 + rho);
    let z = x * x - 2.0 * rho * x * y + y * y;
    FRAC_1_TWO_PI / omr2.sqrt() * (-0.5 * z / omr2).exp()
}

/// (d/dx, d/dy, d/drho) of Phi2.
#[inline]
pub(crate) fn phi2_grad(x: f64, y: f64, rho: f64) -> (f64, f64, f64) {
    let s = ((1.0 - rho) * (1.0 + rho)).sqrt();
    let d_x = phi_pdf(x) * phi((y - rho * x) / s);
    let d_y = phi_pdf(y) * phi((x - rho * y) / s);
    (d_x, d_y, phi2_pdf(x, y, rho))
}

// Gauss-Legendre half-tables (weight, node); each entry is evaluated at both
// 1 - x and 1 + x inside the substitution.
const GL_6: [(f64, f64); 3] = [
    (0.171_324_492_379_170_5, -0.932_469_514_203_152_2),
    (0.360_761_573_048_138_4, -0.661_209_386_466_264_7),
    (0.467_913_934_572_690_4, -0.238_619_186_083_197_0),
];

const GL_12: [(f64, f64); 6] = [
    (0.047_175_336_386_511_77, -0.981_560_634_246_719_1),
    (0.106_939_325_995_318_3, -0.904_117_256_370_475_0),
    (0.160_078_328_543_346_4, -0.769_902_674_194_305_0),
    (0.203_167_426_723_065_9, -0.587_317_954_286_617_1),
    (0.233_492_536_538_354_7, -0.367_831_498_998_180_2),
    (0.249_147_045_813_402_9, -0.125_233_408_511_469_2),
];

const GL_20: [(f64, f64); 10] = [
    (0.017_614_007_139_152_12, -0.993_128_599_185_094_9),
    (0.040_601_429_800_386_94, -0.963_971_927_277_913_8),
    (0.062_672_048_334_109_06, -0.912_234_428_251_325_9),
    (0.083_276_741_576_704_75, -0.839_116_971_822_218_8),
    (0.101_930_119_817_240_4, -0.746_331_906_460_150_8),
    (0.118_194_531_961_518_4, -0.636_053_680_726_515_0),
    (0.131_688_638_449_176_6, -0.510_867_001_950_827_1),
    (0.142_096_109_318_382_1, -0.373_706_088_715_419_6),
    (0.149_172_986_472_603_7, -0.227_785_851_141_645_1),
    (0.152_753_387_130_725_9, -0.076_526_521_133_497_33),
];

#[inline]
fn select_quadrature(rho_abs: f64) -> &'static [(f64, f64)] {
    if rho_abs < 0.3 {
        &GL_6
    } else if rho_abs < 0.75 {
        &GL_12
    } else {
        &GL_20
    }
}

/// P(X > h, Y > k) for standard bivariate normals with correlation `r`.
///
/// Drezner & Wesolowsky (1989) with Genz's double-precision modifications:
/// quadrature on the arcsine substitution for |r| <= 0.925, and the
/// expansion around |r| = 1 otherwise. Requires |r| < 1.
fn bvnd_upper(h_in: f64, k_in: f64, r: f64) -> f64 {
    let h = h_in;
    let mut k = k_in;
    let mut hk = h * k;
    let quad = select_quadrature(r.abs());
    let mut bvn = 0.0;

    if r.abs() <= 0.925 {
        if r.abs() > 0.0 {
            let hs = 0.5 * (h * h + k * k);
            let asr = 0.5 * r.asin();
            for &(w, x) in quad {
                for is in [-1.0f64, 1.0] {
                    let sn = (asr * (is * x + 1.0)).sin();
                    bvn += w * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
                }
            }
            bvn *= asr * FRAC_1_TWO_PI;
        }
        bvn + phi(-h) * phi(-k)
    } else {
        // |r| > 0.925: reduce negative correlation to the positive case via
        // P(X > h, Y > k; r) = P(X > h) - P(X > h, Y > -k; -r).
        if r < 0.0 {
            k = -k;
            hk = -hk;
        }
        if r.abs() < 1.0 {
            let a_s = (1.0 - r) * (1.0 + r);
            let mut a = a_s.sqrt();
            let b_s = (h - k) * (h - k);
            let c = (4.0 - hk) / 8.0;
            let d = (12.0 - hk) / 16.0;
            let asr = -0.5 * (b_s / a_s + hk);
            if asr > -100.0 {
                bvn = a
                    * asr.exp()
                    * (1.0 - c * (b_s - a_s) * (1.0 - d * b_s / 5.0) / 3.0
                        + c * d * a_s * a_s / 5.0);
            }
            if -hk < 100.0 {
                let b = b_s.sqrt();
                bvn -= (-0.5 * hk).exp()
                    * SQRT_TWO_PI
                    * phi(-b / a)
                    * b
                    * (1.0 - c * b_s * (1.0 - d * b_s / 5.0) / 3.0);
            }
            a *= 0.5;
            for &(w, x) in quad {
                for is in [-1.0f64, 1.0] {
                    let xx = a * (is * x + 1.0);
                    let x_s = xx * xx;
                    let asr = -0.5 * (b_s / x_s + hk);
                    if asr > -100.0 {
                        let r_s = (1.0 - x_s).sqrt();
                        bvn += a
                            * w
                            * asr.exp()
                            * ((-hk * (1.0 - r_s) / (2.0 * (1.0 + r_s))).exp() / r_s
                                - (1.0 + c * x_s * (1.0 + d * x_s)));
                    }
                }
            }
            bvn *= -FRAC_1_TWO_PI;
        }
        if r > 0.0 {
            bvn + phi(-h.max(k))
        } else {
            let mut v = -bvn;
            if k > h {
                v += phi(k) - phi(h);
            }
            v
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cdf_symmetry_and_tails() {
        assert_eq!(phi(0.0), 0.5);
        assert_abs_diff_eq!(std_normal_cdf(40.0).unwrap().get(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(std_normal_cdf(-40.0).unwrap().get(), 0.0, epsilon = 1e-15);
        // reference value pinned against the erf/quadrature oracle in the
        // integration suite
        assert_abs_diff_eq!(phi(1.0), 0.841_344_746_068_542_9, epsilon = 1e-15);
    }

    #[test]
    fn cdf_rejects_non_finite() {
        assert!(std_normal_cdf(f64::NAN).is_err());
        assert!(std_normal_cdf(f64::INFINITY).is_err());
    }

    #[test]
    fn quantile_basic() {
        assert_eq!(std_normal_quantile(0.5).unwrap(), 0.0);
        assert_abs_diff_eq!(std_normal_quantile(0.841_344_746).unwrap(), 1.0, epsilon = 1e-9);
        assert!(std_normal_quantile(0.0).is_err());
        assert!(std_normal_quantile(1.0).is_err());
        assert!(std_normal_quantile(-0.2).is_err());
    }

    #[test]
    fn quantile_antisymmetry_and_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..500 {
            let p: f64 = rng.random_range(1e-12..1.0 - 1e-12);
            let x = phi_inv(p);
            assert_abs_diff_eq!(phi_inv(1.0 - p), -x, epsilon = 1e-11 * (1.0 + x.abs()));
            assert_abs_diff_eq!(phi(x), p, epsilon = 1e-12);
        }
    }

    #[test]
    fn bivariate_cdf_independence_and_arcsin() {
        let p = phi2(0.0, 0.0, 0.0);
        assert_abs_diff_eq!(p, 0.25, epsilon = 1e-15);
        // Phi2(0,0,rho) = 1/4 + asin(rho)/(2*pi)
        for rho in [-0.95f64, -0.5, -0.1, 0.1, 0.5, 0.6, 0.95, 0.99] {
            let expect = 0.25 + rho.asin() * FRAC_1_TWO_PI;
            assert_abs_diff_eq!(phi2(0.0, 0.0, rho), expect, epsilon = 1e-13);
        }
        assert_abs_diff_eq!(phi2(0.0, 0.0, 0.5), 1.0 / 3.0, epsilon = 1e-10);
    }

    #[test]
    fn bivariate_cdf_product_at_zero_rho() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let x: f64 = rng.random_range(-4.0..4.0);
            let y: f64 = rng.random_range(-4.0..4.0);
            assert_abs_diff_eq!(phi2(x, y, 0.0), phi(x) * phi(y), epsilon = 1e-15);
        }
    }

    #[test]
    fn bivariate_cdf_symmetric_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let x: f64 = rng.random_range(-4.0..4.0);
            let y: f64 = rng.random_range(-4.0..4.0);
            let rho: f64 = rng.random_range(-0.999..0.999);
            assert_eq!(phi2(x, y, rho).to_bits(), phi2(y, x, rho).to_bits());
        }
    }

    #[test]
    fn bivariate_cdf_boundary_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let x: f64 = rng.random_range(-4.0..4.0);
            let rho: f64 = rng.random_range(-0.95..0.95);
            assert_abs_diff_eq!(phi2(x, 8.5, rho), phi(x), epsilon = 1e-10);
        }
    }

    #[test]
    fn bivariate_cdf_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..300 {
            let x: f64 = rng.random_range(-3.0..3.0);
            let y: f64 = rng.random_range(-3.0..3.0);
            let rho: f64 = rng.random_range(-0.95..0.95);
            let base = phi2(x, y, rho);
            assert!(phi2(x + 0.1, y, rho) >= base - 1e-14);
            assert!(phi2(x, y + 0.1, rho) >= base - 1e-14);
            assert!(phi2(x, y, (rho + 0.02).min(CORR_BOUND)) >= base - 1e-14);
        }
    }

    #[test]
    fn bivariate_cdf_rejects_bad_inputs() {
        assert!(Corr::new(1.0).is_err());
        assert!(Corr::new(-1.3).is_err());
        assert!(bivariate_normal_cdf(f64::NAN, 0.0, Corr::new(0.2).unwrap()).is_err());
        assert_eq!(Corr::clamped(5.0).get(), CORR_BOUND);
    }

    #[test]
    fn pdf_origin_and_independence() {
        assert_abs_diff_eq!(phi2_pdf(0.0, 0.0, 0.0), FRAC_1_TWO_PI, epsilon = 1e-16);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let x: f64 = rng.random_range(-3.0..3.0);
            let y: f64 = rng.random_range(-3.0..3.0);
            assert_abs_diff_eq!(phi2_pdf(x, y, 0.0), phi_pdf(x) * phi_pdf(y), epsilon = 1e-15);
        }
    }

    #[test]
    fn pdf_matches_cdf_rho_derivative() {
        // Plackett's identity, checked with central differences of the CDF.
        let cases = [(0.7, -0.2, 0.4), (0.0, 0.0, 0.0), (-1.1, 0.6, -0.5), (1.5, 1.5, 0.8)];
        let h = 1e-5;
        for (x, y, rho) in cases {
            let fd = (phi2(x, y, rho + h) - phi2(x, y, rho - h)) / (2.0 * h);
            assert_abs_diff_eq!(phi2_pdf(x, y, rho), fd, epsilon = 1e-6);
        }
    }

    #[test]
    fn grad_closed_forms() {
        let g = phi2_grad(0.0, 0.0, 0.0);
        assert_abs_diff_eq!(g.0, phi_pdf(0.0) * 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(g.1, phi_pdf(0.0) * 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(g.2, FRAC_1_TWO_PI, epsilon = 1e-15);

        let (dx, _, _) = phi2_grad(0.8, -0.3, 0.0);
        assert_abs_diff_eq!(dx, phi_pdf(0.8) * phi(-0.3), epsilon = 1e-15);
    }

    #[test]
    fn grad_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let h = 1e-5;
        for _ in 0..1000 {
            let x: f64 = rng.random_range(-2.5..2.5);
            let y: f64 = rng.random_range(-2.5..2.5);
            let rho: f64 = rng.random_range(-0.95..0.95);
            let (dx, dy, dr) = phi2_grad(x, y, rho);
            let fx = (phi2(x + h, y, rho) - phi2(x - h, y, rho)) / (2.0 * h);
            let fy = (phi2(x, y + h, rho) - phi2(x, y - h, rho)) / (2.0 * h);
            let fr = (phi2(x, y, rho + h) - phi2(x, y, rho - h)) / (2.0 * h);
            // tiny gradients are below central-difference resolution; floor
            // the denominator so the relative test stays meaningful
            for (an, fd) in [(dx, fx), (dy, fy), (dr, fr)] {
                let denom = an.abs().max(1e-4);
                assert!(
                    ((an - fd) / denom).abs() <= 1e-6,
                    "grad mismatch at ({x},{y},{rho}): analytic {an}, fd {fd}"
                );
            }
        }
    }

    #[test]
    fn grad_specific_point_fd() {
        let (dx, dy, dr) = phi2_grad(-0.5, 1.2, 0.6);
        let h = 1e-5;
        let fx = (phi2(-0.5 + h, 1.2, 0.6) - phi2(-0.5 - h, 1.2, 0.6)) / (2.0 * h);
        let fy = (phi2(-0.5, 1.2 + h, 0.6) - phi2(-0.5, 1.2 - h, 0.6)) / (2.0 * h);
        let fr = (phi2(-0.5, 1.2, 0.6 + h) - phi2(-0.5, 1.2, 0.6 - h)) / (2.0 * h);
        assert!(((dx - fx) / dx).abs() < 1e-6);
        assert!(((dy - fy) / dy).abs() < 1e-6);
        assert!(((dr - fr) / dr).abs() < 1e-6);
    }

    #[test]
    fn high_rho_branch_consistency() {
        // The two algorithm branches must agree where they meet, and the
        // negative-correlation reduction must satisfy
        // P(X<=x, Y<=y; r) + P(X<=x, Y<=-y; -r) = Phi(x).
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..500 {
            let x: f64 = rng.random_range(-3.0..3.0);
            let y: f64 = rng.random_range(-3.0..3.0);
            let rho: f64 = rng.random_range(-0.9999..0.9999);
            let lhs = phi2(x, y, rho) + phi2(x, -y, -rho);
            assert_abs_diff_eq!(lhs, phi(x), epsilon = 5e-15);
        }
        for rho in [0.9249, 0.9251, -0.9249, -0.9251] {
            let a = phi2(0.4, -0.2, rho);
            let b = phi2(0.4, -0.2, rho + 1e-6);
            assert!((a - b).abs() < 1e-5);
        }
    }
}
