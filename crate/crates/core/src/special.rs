//! Special functions used by densities, quadratures and calibration.

use alloc::vec::Vec;
use core::f64::consts::{PI, SQRT_2};
#[allow(unused_imports)]
use num_traits::Float;

pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// Standard normal upper tail `1 - Φ(x)`, accurate far into the tail.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x / SQRT_2)
}

/// Inverse of the standard normal CDF (Wichura's AS 241, PPND16).
///
/// Relative accuracy is about 1e-16 over the open unit interval. Returns
/// `±inf` at the endpoints and NaN outside `[0, 1]`.
pub fn inverse_normal_cdf(p: f64) -> f64 {
    if !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = (((((((2.509_080_928_730_122_7e3 * r + 3.343_057_558_358_813e4) * r
            + 6.726_577_092_700_87e4)
            * r
            + 4.592_195_393_154_987e4)
            * r
            + 1.373_169_376_550_946e4)
            * r
            + 1.971_590_950_306_551_3e3)
            * r
            + 1.331_416_678_917_843_8e2)
            * r
            + 3.387_132_872_796_366_5)
            * q;
        let den = ((((((5.226_495_278_852_545e3 * r + 2.872_908_573_572_194_3e4) * r
            + 3.930_789_580_009_271e4)
            * r
            + 2.121_379_430_158_659_7e4)
            * r
            + 5.394_196_021_424_751e3)
            * r
            + 6.871_870_074_920_579e2)
            * r
            + 4.231_333_070_160_091e1)
            * r
            + 1.0;
        return num / den;
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-tail.ln()).sqrt();
    let val = if r <= 5.0 {
        r -= 1.6;
        let num = ((((((7.745_450_142_783_414e-4 * r + 2.272_384_498_926_918_4e-2) * r
            + 2.417_807_251_774_506e-1)
            * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_545)
            * r
            + 1.423_437_110_749_683_5;
        let den = ((((((1.050_750_071_644_416_8e-9 * r + 5.475_938_084_995_345e-4) * r
            + 1.519_866_656_361_645_7e-2)
            * r
            + 1.481_039_764_274_800_8e-1)
            * r
            + 6.897_673_349_851e-1)
            * r
            + 1.676_384_830_183_803_8)
            * r
            + 2.053_191_626_637_759)
            * r
            + 1.0;
        num / den
    } else {
        r -= 5.0;
        let num = ((((((2.010_334_399_292_288e-7 * r + 2.711_555_568_743_487_6e-5) * r
            + 1.242_660_947_388_078_4e-3)
            * r
            + 2.653_218_952_657_612_4e-2)
            * r
            + 2.965_605_718_285_049e-1)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114)
            * r
            + 6.657_904_643_501_103;
        let den = ((((((2.044_263_103_389_939_8e-15 * r + 1.421_511_758_316_446e-7) * r
            + 1.846_318_317_510_054_8e-5)
            * r
            + 7.868_691_311_456_133e-4)
            * r
            + 1.487_536_129_085_061_5e-2)
            * r
            + 1.369_298_809_227_358e-1)
            * r
            + 5.998_322_065_558_88e-1)
            * r
            + 1.0;
        num / den
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

/// Running sum of `exp(l_i)` kept as `exp(shift) * acc`.
struct LogSum {
    shift: f64,
    acc: f64,
}

impl LogSum {
    fn new(first: f64) -> Self {
        LogSum { shift: first, acc: 1.0 }
    }

    fn add(&mut self, l: f64) {
        if l > self.shift {
            self.acc = self.acc * (self.shift - l).exp() + 1.0;
            self.shift = l;
        } else {
            self.acc += (l - self.shift).exp();
        }
    }

    fn ln(&self) -> f64 {
        self.shift + self.acc.ln()
    }
}

/// `ln I_nu(x)` for the modified Bessel function of the first kind, `nu >= 0`, `x > 0`.
///
/// Uses the ascending series summed in log space; all terms are positive so
/// there is no cancellation. Above `x = 1e4` the Hankel asymptotic expansion
/// takes over.
pub fn ln_bessel_i(nu: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return if nu == 0.0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if x > 1e4 {
        let mu = 4.0 * nu * nu;
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..8 {
            let kf = k as f64;
            term *= -(mu - (2.0 * kf - 1.0).powi(2)) / (kf * 8.0 * x);
            sum += term;
        }
        return x - 0.5 * (2.0 * PI * x).ln() + sum.ln();
    }
    let lh = (0.5 * x).ln();
    let term = |m: f64| (2.0 * m + nu) * lh - ln_gamma(m + 1.0) - ln_gamma(m + nu + 1.0);
    let mut sum = LogSum::new(term(0.0));
    let peak = 0.5 * x;
    let mut m = 1.0;
    loop {
        let l = term(m);
        sum.add(l);
        if m > peak && l - sum.ln() < -40.0 {
            break;
        }
        m += 1.0;
    }
    sum.ln()
}

/// `ln M(a, b, z)` for Kummer's confluent hypergeometric function with `a, b > 0`, `z >= 0`.
///
/// Power series with term-ratio stopping at 1e-15; for `z > 50` (and `z > 4b`,
/// where the expansion is well behaved) the large-`z` asymptotic series is used.
pub fn ln_kummer_m(a: f64, b: f64, z: f64) -> f64 {
    if z == 0.0 {
        return 0.0;
    }
    if z > 50.0 && z > 4.0 * b {
        let mut term = 1.0;
        let mut sum = 1.0;
        for s in 0..40 {
            let sf = s as f64;
            let next = term * (b - a + sf) * (1.0 - a + sf) / ((sf + 1.0) * z);
            if next.abs() >= term.abs() || next.abs() < 1e-17 * sum.abs() {
                if next.abs() < term.abs() {
                    sum += next;
                }
                break;
            }
            sum += next;
            term = next;
        }
        return ln_gamma(b) - ln_gamma(a) + z + (a - b) * z.ln() + sum.ln();
    }
    let mut log_term = 0.0;
    let mut sum = LogSum::new(0.0);
    let mut m = 0.0;
    loop {
        let ratio = (a + m) / (b + m) * z / (m + 1.0);
        log_term += ratio.ln();
        sum.add(log_term);
        m += 1.0;
        if ratio < 1.0 && log_term - sum.ln() < (1e-15f64).ln() {
            break;
        }
    }
    sum.ln()
}

/// Natural log of the surface area of the unit sphere `S^{d-1}` in `R^d`.
pub fn ln_sphere_area(d: usize) -> f64 {
    let h = 0.5 * d as f64;
    (2.0f64).ln() + h * PI.ln() - ln_gamma(h)
}

/// Dimension of the space of degree-`k` spherical harmonics on `S^{d-1}`.
pub fn harmonic_multiplicity(d: usize, k: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if d == 2 {
        return 2.0;
    }
    let (df, kf) = (d as f64, k as f64);
    // C(k + d - 2, k) by running product, then the degree factor.
    let mut binom = 1.0;
    for j in 1..=k {
        binom *= (df - 2.0 + j as f64) / j as f64;
    }
    binom * (2.0 * kf + df - 2.0) / (kf + df - 2.0)
}

/// Normalized Gegenbauer polynomials `P_k(t) = C_k^{(d-2)/2}(t) / C_k^{(d-2)/2}(1)`
/// for `k = 0..out.len()`, so that `P_k(1) = 1`.
pub fn zonal_polynomials(d: usize, t: f64, out: &mut [f64]) {
    let df = d as f64;
    for k in 0..out.len() {
        out[k] = match k {
            0 => 1.0,
            1 => t,
            _ => {
                let kf = (k - 1) as f64;
                ((2.0 * kf + df - 2.0) * t * out[k - 1] - kf * out[k - 2]) / (kf + df - 2.0)
            }
        };
    }
}

/// Same as [`zonal_polynomials`] but returning a fresh vector.
pub fn zonal_polynomials_vec(d: usize, t: f64, degrees: usize) -> Vec<f64> {
    let mut out = alloc::vec![0.0; degrees];
    zonal_polynomials(d, t, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_normal_matches_reference_values() {
        assert!((inverse_normal_cdf(0.95) - 1.644_853_626_951_472_2).abs() < 1e-14);
        assert!((inverse_normal_cdf(0.975) - 1.959_963_984_540_054).abs() < 1e-14);
        assert_eq!(inverse_normal_cdf(0.5), 0.0);
        assert!((inverse_normal_cdf(1e-10) + 6.361_340_902_404_056).abs() < 1e-12);
    }

    #[test]
    fn inverse_normal_round_trips_through_cdf() {
        for i in 1..1000 {
            let p = i as f64 / 1000.0;
            let z = inverse_normal_cdf(p);
            assert!((normal_cdf(z) - p).abs() < 1e-15, "p = {p}");
        }
    }

    #[test]
    fn bessel_half_order_closed_form() {
        // I_{1/2}(x) = sqrt(2 / (pi x)) sinh x
        for &x in &[0.01, 0.5, 1.0, 7.0, 40.0, 300.0] {
            let exact = (2.0 / (PI * x)).sqrt().ln() + x.sinh().ln();
            assert!((ln_bessel_i(0.5, x) - exact).abs() < 1e-12, "x = {x}");
        }
        // I_0(1) = 1.2660658777520082
        assert!((ln_bessel_i(0.0, 1.0).exp() - 1.266_065_877_752_008_4).abs() < 1e-14);
    }

    #[test]
    fn bessel_asymptotic_branch_is_continuous() {
        let below = ln_bessel_i(3.5, 9_999.0);
        let above = ln_bessel_i(3.5, 10_001.0);
        // d/dx ln I ~ 1 for large x
        assert!((above - below - 2.0).abs() < 1e-3);
    }

    #[test]
    fn kummer_special_cases() {
        // M(a, a, z) = e^z
        assert!((ln_kummer_m(1.5, 1.5, 3.0) - 3.0).abs() < 1e-13);
        // M(1/2, 3/2, z) = sqrt(pi) erfi(sqrt z) / (2 sqrt z); z = 1 -> 1.4626517459071816
        assert!((ln_kummer_m(0.5, 1.5, 1.0).exp() - 1.462_651_745_907_181_6).abs() < 1e-13);
        assert_eq!(ln_kummer_m(0.5, 1.5, 0.0), 0.0);
    }

    #[test]
    fn kummer_branches_agree_near_switch() {
        let z = 50.5;
        let asym = ln_kummer_m(0.5, 1.5, z);
        // Series evaluated by hand at the same point.
        let mut log_term = 0.0;
        let mut sum = LogSum::new(0.0);
        for m in 0..2000 {
            let m = m as f64;
            log_term += ((0.5 + m) / (1.5 + m) * z / (m + 1.0)).ln();
            sum.add(log_term);
        }
        assert!((asym - sum.ln()).abs() < 1e-10);
    }

    #[test]
    fn multiplicities() {
        for k in 0..10 {
            assert!((harmonic_multiplicity(3, k) - (2 * k + 1) as f64).abs() < 1e-12);
        }
        // d = 4: (k + 1)^2
        for k in 0..10 {
            assert!((harmonic_multiplicity(4, k) - ((k + 1) * (k + 1)) as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn zonal_polynomials_reduce_to_legendre() {
        let p = zonal_polynomials_vec(3, 0.3, 4);
        assert!((p[2] - 0.5 * (3.0 * 0.09 - 1.0)).abs() < 1e-15);
        assert!((p[3] - 0.5 * (5.0 * 0.027 - 3.0 * 0.3)).abs() < 1e-15);
        let at_one = zonal_polynomials_vec(17, 1.0, 30);
        assert!(at_one.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn sphere_areas() {
        assert!((ln_sphere_area(3).exp() - 4.0 * PI).abs() < 1e-12);
        assert!((ln_sphere_area(2).exp() - 2.0 * PI).abs() < 1e-12);
    }
}
