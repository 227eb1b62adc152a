//! Null quantiles and p-values.
//!
//! Monte-Carlo methods keep their sorted replicates. The threshold at level
//! `α` is the order statistic with index `j = R + 1 − m`, where `m` is the
//! largest integer with `m / (R + 1) ≤ α` (equivalently `j = ⌈(1−α)(R+1)⌉`);
//! if `j > R` the threshold is `+∞`. With the add-one p-value
//! `(1 + #{replicates ≥ t}) / (R + 1)` this makes `p ≤ α` hold exactly when
//! the statistic exceeds the threshold.

use alloc::vec::Vec;
use core::fmt;
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::dists::AlternativeSpec;
use crate::embedding::{theory_threshold, TestKind};
use crate::rng::{derive_seed, stream_rng};
use crate::sample::Sample;
use crate::special::{inverse_normal_cdf, normal_sf};
use crate::spectrum::SpectralBasis;
use crate::{Error, Result};

/// Smallest replication count accepted by the Monte-Carlo methods.
pub const MIN_REPLICATIONS: usize = 100;
/// Default replication count for empirical null calibration.
pub const DEFAULT_EMPIRICAL_REPS: usize = 200;
/// Default replication count for the chi-square mixture.
pub const DEFAULT_CHISQ_REPS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CalibrationMethod {
    ChisqMixtureMc,
    Normal,
    EmpiricalMc,
    TheoryLogLog,
}

impl CalibrationMethod {
    pub const ALL: [CalibrationMethod; 4] = [
        CalibrationMethod::ChisqMixtureMc,
        CalibrationMethod::Normal,
        CalibrationMethod::EmpiricalMc,
        CalibrationMethod::TheoryLogLog,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            CalibrationMethod::ChisqMixtureMc => "chisq-mixture-mc",
            CalibrationMethod::Normal => "normal",
            CalibrationMethod::EmpiricalMc => "empirical-mc",
            CalibrationMethod::TheoryLogLog => "theory-loglog",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        CalibrationMethod::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::parse(s, "unknown calibration method"))
    }

    pub fn is_monte_carlo(&self) -> bool {
        matches!(self, CalibrationMethod::ChisqMixtureMc | CalibrationMethod::EmpiricalMc)
    }

    /// Whether this method produces a threshold on the scale of `kind`'s statistic.
    pub fn supports(&self, kind: TestKind) -> bool {
        matches!(
            (self, kind),
            (CalibrationMethod::ChisqMixtureMc, TestKind::Mmd)
                | (CalibrationMethod::Normal, TestKind::M3d)
                | (CalibrationMethod::TheoryLogLog, TestKind::Adaptive)
                | (CalibrationMethod::EmpiricalMc, _)
        )
    }
}

impl fmt::Display for CalibrationMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A null threshold with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct NullCalibration {
    pub method: CalibrationMethod,
    pub alpha: f64,
    pub quantile: f64,
    /// Number of Monte-Carlo replicates (0 for analytic thresholds).
    pub replications: usize,
    pub seed: Option<u64>,
    /// Sorted replicate statistics, kept for p-values and re-thresholding.
    pub replicates: Option<Vec<f64>>,
    /// Test the replicates were generated for (empirical calibration only).
    pub kind: Option<TestKind>,
    /// Sample size the calibration applies to, when it depends on it.
    pub n: Option<usize>,
    /// Bias bound from truncating the eigenvalue series, `Σ_{k>K} λ_k`, when known.
    pub truncation_bias: Option<f64>,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid("alpha", "alpha must lie in (0, 1)"))
    }
}

/// Largest `m` with `m / (R + 1) ≤ α`, evaluated with the same floating-point
/// comparison used for p-values.
fn tail_count(alpha: f64, reps: usize) -> usize {
    let denom = (reps + 1) as f64;
    let mut m = (alpha * denom).floor().max(0.0) as usize;
    while m > 0 && m as f64 / denom > alpha {
        m -= 1;
    }
    while ((m + 1) as f64 / denom) <= alpha {
        m += 1;
    }
    m
}

/// Order-statistic threshold of sorted replicates at level `α`.
pub fn mc_threshold(sorted: &[f64], alpha: f64) -> f64 {
    let r = sorted.len();
    let m = tail_count(alpha, r);
    if m == 0 {
        return f64::INFINITY;
    }
    sorted[r - m]
}

/// `(1 + #{replicates ≥ t}) / (R + 1)`.
pub fn mc_p_value(sorted: &[f64], t: f64) -> f64 {
    let below = sorted.partition_point(|x| *x < t);
    let r = sorted.len() - below;
    (r + 1) as f64 / (sorted.len() + 1) as f64
}

impl NullCalibration {
    /// Monte-Carlo calibration from replicate statistics (any order).
    pub fn from_replicates(
        method: CalibrationMethod,
        alpha: f64,
        mut replicates: Vec<f64>,
        seed: u64,
    ) -> Result<Self> {
        check_alpha(alpha)?;
        if replicates.len() < MIN_REPLICATIONS {
            return Err(Error::TooFewReplications(replicates.len()));
        }
        if let Some(bad) = replicates.iter().find(|x| x.is_nan()) {
            return Err(Error::invalid("replicates", alloc::format!("replicate statistic is {bad}")));
        }
        replicates.sort_by(f64::total_cmp);
        Ok(NullCalibration {
            method,
            alpha,
            quantile: mc_threshold(&replicates, alpha),
            replications: replicates.len(),
            seed: Some(seed),
            replicates: Some(replicates),
            kind: None,
            n: None,
            truncation_bias: None,
        })
    }

    /// The same calibration thresholded at another level.
    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if alpha == self.alpha {
            return Ok(self.clone());
        }
        let mut out = self.clone();
        out.alpha = alpha;
        out.quantile = match (&self.method, &self.replicates) {
            (_, Some(r)) => mc_threshold(r, alpha),
            (CalibrationMethod::Normal, None) => normal_quantile(alpha)?,
            (CalibrationMethod::TheoryLogLog, None) => self.quantile,
            _ => {
                return Err(Error::AlphaMismatch {
                    calibrated: self.alpha,
                    requested: alpha,
                })
            }
        };
        Ok(out)
    }

    /// p-value of an observed statistic, when the method defines one.
    pub fn p_value(&self, t: f64) -> Option<f64> {
        match (&self.method, &self.replicates) {
            (_, Some(r)) => Some(mc_p_value(r, t)),
            (CalibrationMethod::Normal, None) => Some(normal_sf(t)),
            _ => None,
        }
    }

    pub fn check_kind(&self, kind: TestKind) -> Result<()> {
        if !self.method.supports(kind) || self.kind.is_some_and(|k| k != kind) {
            return Err(Error::IncompatibleCalibration {
                method: self.method,
                kind,
            });
        }
        Ok(())
    }
}

/// Upper `α` point of the standard normal, `z_{1−α}`, by Wichura's AS241
/// rational approximation (relative accuracy about 1e-16).
pub fn normal_quantile(alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(-inverse_normal_cdf(alpha))
}

/// Analytic calibration of the studentized M³d statistic.
pub fn normal_calibration(alpha: f64) -> Result<NullCalibration> {
    Ok(NullCalibration {
        method: CalibrationMethod::Normal,
        alpha,
        quantile: normal_quantile(alpha)?,
        replications: 0,
        seed: None,
        replicates: None,
        kind: Some(TestKind::M3d),
        n: None,
        truncation_bias: None,
    })
}

/// `√(3 ln ln n)` threshold for the adaptive statistic.
pub fn theory_calibration(n: usize, alpha: f64) -> Result<NullCalibration> {
    check_alpha(alpha)?;
    Ok(NullCalibration {
        method: CalibrationMethod::TheoryLogLog,
        alpha,
        quantile: theory_threshold(n)?,
        replications: 0,
        seed: None,
        replicates: None,
        kind: Some(TestKind::Adaptive),
        n: Some(n),
        truncation_bias: None,
    })
}

/// One draw of `W = Σ_b λ_b χ²_{m_b}`, replicate `r` of `seed`.
pub fn chisq_mix_replicate(eigenvalues: &[f64], multiplicities: &[f64], seed: u64, r: u64) -> f64 {
    let mut rng = stream_rng(seed, r);
    eigenvalues
        .iter()
        .zip(multiplicities)
        .map(|(&l, &m)| {
            let x = if m == 1.0 {
                let z: f64 = rng.sample(StandardNormal);
                z * z
            } else {
                ChiSquared::new(m).expect("positive degrees of freedom").sample(&mut rng)
            };
            l * x
        })
        .sum()
}

fn check_spectrum(eigenvalues: &[f64]) -> Result<()> {
    if eigenvalues.is_empty() || eigenvalues.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
        return Err(Error::invalid("eigenvalues", "eigenvalues must be positive"));
    }
    Ok(())
}

/// Monte-Carlo `(1−α)` quantile of `W = Σ_k λ_k Z_k²`, the null limit of `nγ²`.
pub fn chisq_mix_quantile(eigenvalues: &[f64], alpha: f64, reps: usize, seed: u64) -> Result<NullCalibration> {
    let ones = alloc::vec![1.0; eigenvalues.len()];
    chisq_mix_quantile_blocks(eigenvalues, &ones, alpha, reps, seed)
}

/// As [`chisq_mix_quantile`] with block multiplicities, `W = Σ_b λ_b χ²_{m_b}`.
pub fn chisq_mix_quantile_blocks(
    eigenvalues: &[f64],
    multiplicities: &[f64],
    alpha: f64,
    reps: usize,
    seed: u64,
) -> Result<NullCalibration> {
    check_spectrum(eigenvalues)?;
    check_alpha(alpha)?;
    if reps < MIN_REPLICATIONS {
        return Err(Error::TooFewReplications(reps));
    }
    let replicates = (0..reps as u64)
        .map(|r| chisq_mix_replicate(eigenvalues, multiplicities, seed, r))
        .collect();
    let mut cal = NullCalibration::from_replicates(CalibrationMethod::ChisqMixtureMc, alpha, replicates, seed)?;
    cal.kind = Some(TestKind::Mmd);
    Ok(cal)
}

/// Chi-square mixture calibration for the MMD test on `basis`, reporting the
/// tail-mass bias bound when the basis carries a tail model.
pub fn chisq_mix_for_basis(basis: &SpectralBasis, alpha: f64, reps: usize, seed: u64) -> Result<NullCalibration> {
    let mut cal = chisq_mix_quantile_blocks(basis.eigenvalues(), basis.multiplicities(), alpha, reps, seed)?;
    cal.truncation_bias = basis.tail().map(|t| t.tail_mass(basis.dimension() as usize));
    Ok(cal)
}

/// Seed of the `r`-th null sample of an empirical calibration.
pub fn replicate_seed(seed: u64, r: u64) -> u64 {
    derive_seed(&[seed, r])
}

/// Sample `(1−α)` quantile of `statistic` over `reps` independent null samples of size `n`.
pub fn empirical_null_quantile(
    statistic: &dyn Fn(&Sample) -> Result<f64>,
    null: &AlternativeSpec,
    n: usize,
    alpha: f64,
    reps: usize,
    seed: u64,
) -> Result<NullCalibration> {
    check_alpha(alpha)?;
    if reps < MIN_REPLICATIONS {
        return Err(Error::TooFewReplications(reps));
    }
    let replicates = (0..reps as u64)
        .map(|r| statistic(&null.sample(n, replicate_seed(seed, r))?))
        .collect::<Result<Vec<f64>>>()?;
    let mut cal = NullCalibration::from_replicates(CalibrationMethod::EmpiricalMc, alpha, replicates, seed)?;
    cal.n = Some(n);
    Ok(cal)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_and_p_value_agree() {
        let reps: Vec<f64> = (0..199).map(|i| i as f64).collect();
        let cal = NullCalibration::from_replicates(CalibrationMethod::EmpiricalMc, 0.05, reps.clone(), 1).unwrap();
        // m = 10, j = 190, threshold = 190th smallest = 189.0
        assert_eq!(cal.quantile, 189.0);
        for t in [188.0, 188.5, 189.0, 189.5, 190.0, 250.0] {
            let p = cal.p_value(t).unwrap();
            assert_eq!(p <= 0.05, t > cal.quantile, "t={t} p={p}");
        }
        for alpha in [0.001, 0.01, 0.05, 0.1, 0.5, 0.9] {
            let c = cal.with_alpha(alpha).unwrap();
            for i in 0..400 {
                let t = i as f64 * 0.5 - 1.0;
                assert_eq!(c.p_value(t).unwrap() <= alpha, t > c.quantile);
            }
        }
        assert_eq!(cal.with_alpha(0.001).unwrap().quantile, f64::INFINITY);
    }

    #[test]
    fn quantile_is_monotone() {
        let cal = chisq_mix_quantile(&[0.5, 0.2, 0.1], 0.05, 2000, 3).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for alpha in [0.999, 0.9, 0.5, 0.2, 0.05, 0.01] {
            let q = cal.with_alpha(alpha).unwrap().quantile;
            assert!(q >= prev);
            prev = q;
        }
    }

    #[test]
    fn chi_square_quantiles() {
        let one = chisq_mix_quantile(&[1.0], 0.05, 200_000, 11).unwrap();
        assert!((one.quantile - 3.8415).abs() < 0.05, "{}", one.quantile);
        let two = chisq_mix_quantile(&[0.5, 0.5], 0.05, 200_000, 12).unwrap();
        assert!((two.quantile - 2.9957).abs() < 0.03, "{}", two.quantile);
        let blocks = chisq_mix_quantile_blocks(&[0.5], &[2.0], 0.05, 200_000, 13).unwrap();
        assert!((blocks.quantile - 2.9957).abs() < 0.03);
    }

    #[test]
    fn too_few_replications() {
        assert_eq!(chisq_mix_quantile(&[1.0], 0.05, 99, 1).unwrap_err(), Error::TooFewReplications(99));
    }

    #[test]
    fn normal_quantiles() {
        assert!((normal_quantile(0.05).unwrap() - 1.6448536269514722).abs() < 1e-12);
        assert_eq!(normal_quantile(0.5).unwrap(), 0.0);
        assert!((normal_quantile(0.025).unwrap() - 1.959963984540054).abs() < 1e-12);
        assert!(normal_quantile(0.0).is_err() && normal_quantile(1.0).is_err());
    }

    #[test]
    fn constant_statistic() {
        let null = AlternativeSpec::UniformCube { d: 1 };
        let cal = empirical_null_quantile(&|_| Ok(0.0), &null, 10, 0.05, 100, 4).unwrap();
        assert_eq!(cal.quantile, 0.0);
        assert_eq!(cal.with_alpha(0.5).unwrap().quantile, 0.0);
    }

    #[test]
    fn empirical_calibration_is_deterministic() {
        let null = AlternativeSpec::UniformCube { d: 1 };
        let stat = |s: &Sample| Ok(s.as_slice().iter().sum::<f64>());
        let a = empirical_null_quantile(&stat, &null, 20, 0.05, 150, 9).unwrap();
        let b = empirical_null_quantile(&stat, &null, 20, 0.05, 150, 9).unwrap();
        assert_eq!(a.quantile.to_bits(), b.quantile.to_bits());
        assert_eq!(a.replicates, b.replicates);
    }

    #[test]
    fn incompatible_methods() {
        let n = normal_calibration(0.05).unwrap();
        assert!(n.check_kind(TestKind::M3d).is_ok());
        assert!(n.check_kind(TestKind::Mmd).is_err());
        let t = theory_calibration(100, 0.05).unwrap();
        assert!(t.check_kind(TestKind::Adaptive).is_ok());
        let c = chisq_mix_quantile(&[1.0], 0.05, 100, 1).unwrap();
        assert!(c.check_kind(TestKind::Adaptive).is_err());
    }
}
