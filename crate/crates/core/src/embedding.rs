//! Kernel-embedding statistics: the MMD V-statistic, the moderated MMD (M³d)
//! and its studentization, the `ϱ` schedule and the adaptive max-over-grid test.
//!
//! Every statistic is computed from a [`Projection`] of the sample onto the
//! basis, accumulated in the sample's canonical order so that results do not
//! depend on the order of the observations.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
#[allow(unused_imports)]
use num_traits::Float;

use crate::calibrate::{CalibrationMethod, NullCalibration};
use crate::sample::Sample;
use crate::spectrum::{effective_variance, moderated_eval, ModeratedSpectrum, Projection, SpectralBasis};
use crate::{Error, Result};

/// Largest sample accepted by [`eta_sq_gram`].
pub const GRAM_LIMIT: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TestKind {
    Mmd,
    M3d,
    Adaptive,
}

impl TestKind {
    pub const ALL: [TestKind; 3] = [TestKind::Mmd, TestKind::M3d, TestKind::Adaptive];

    pub fn name(&self) -> &'static str {
        match self {
            TestKind::Mmd => "mmd",
            TestKind::M3d => "m3d",
            TestKind::Adaptive => "adaptive",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        TestKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::parse(s, "test kind must be mmd, m3d or adaptive"))
    }
}

impl fmt::Display for TestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn check_same_basis(ms: &ModeratedSpectrum<'_>, proj: &Projection) -> Result<()> {
    if proj.energies.len() != ms.basis().len() {
        return Err(Error::invalid("projection", "projection was computed on a different basis"));
    }
    Ok(())
}

/// `γ² = Σ_k λ_k E_k` from a projection.
pub fn mmd_from_projection(basis: &SpectralBasis, proj: &Projection) -> f64 {
    basis.eigenvalues().iter().zip(&proj.energies).map(|(l, e)| l * e).sum()
}

/// Squared MMD of the empirical distribution to `P₀`, `Σ_k λ_k [n⁻¹ Σ_i φ_k(X_i)]²`.
pub fn mmd_vstat(basis: &SpectralBasis, sample: &Sample) -> Result<f64> {
    if !basis.is_degenerate() {
        return Err(Error::NotDegenerate);
    }
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    Ok(mmd_from_projection(basis, &basis.project(sample)?))
}

/// Components of the moderated statistic for one `ϱ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct M3dParts {
    pub n: usize,
    /// `η² = Σ_k λ̃_k E_k`.
    pub eta_sq: f64,
    /// `A_n = n⁻¹ Σ_i K̃(X_i, X_i)`.
    pub diag: f64,
    /// `v = Σ_k λ̃_k²`.
    pub variance: f64,
}

impl M3dParts {
    /// `(2v)^{-1/2} (n η² − A_n)`.
    pub fn studentized(&self) -> f64 {
        (self.n as f64 * self.eta_sq - self.diag) / (2.0 * self.variance).sqrt()
    }
}

pub fn m3d_parts(ms: &ModeratedSpectrum<'_>, proj: &Projection) -> Result<M3dParts> {
    check_same_basis(ms, proj)?;
    let lt = ms.moderated_eigenvalues();
    Ok(M3dParts {
        n: proj.n,
        eta_sq: lt.iter().zip(&proj.energies).map(|(l, e)| l * e).sum(),
        diag: lt.iter().zip(&proj.diagonal).map(|(l, d)| l * d).sum(),
        variance: effective_variance(ms),
    })
}

fn parts(ms: &ModeratedSpectrum<'_>, sample: &Sample) -> Result<M3dParts> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    m3d_parts(ms, &ms.basis().project(sample)?)
}

/// `η²_ϱ(P̂_n, P₀) = Σ_k λ̃_k [n⁻¹ Σ_i φ_k(X_i)]²`.
pub fn eta_sq(ms: &ModeratedSpectrum<'_>, sample: &Sample) -> Result<f64> {
    Ok(parts(ms, sample)?.eta_sq)
}

/// `n⁻² Σ_{i,j} K̃_ϱ(X_i, X_j)`, evaluated pairwise; limited to [`GRAM_LIMIT`] points.
pub fn eta_sq_gram(ms: &ModeratedSpectrum<'_>, sample: &Sample) -> Result<f64> {
    let n = sample.len();
    if n == 0 {
        return Err(Error::EmptySample);
    }
    if n > GRAM_LIMIT {
        return Err(Error::GramLimit { n, limit: GRAM_LIMIT });
    }
    if sample.domain() != ms.basis().domain() {
        return Err(Error::DomainMismatch {
            expected: ms.basis().domain(),
            found: sample.domain(),
        });
    }
    let order = sample.canonical_order();
    let mut total = 0.0;
    for (a, &i) in order.iter().enumerate() {
        let xi = sample.point(i);
        total += moderated_eval(ms, xi, xi);
        for &j in &order[a + 1..] {
            total += 2.0 * moderated_eval(ms, xi, sample.point(j));
        }
    }
    Ok(total / (n as f64 * n as f64))
}

/// `A_n = n⁻¹ Σ_i K̃_ϱ(X_i, X_i)`.
pub fn diag_term(ms: &ModeratedSpectrum<'_>, sample: &Sample) -> Result<f64> {
    Ok(parts(ms, sample)?.diag)
}

/// `T_{n,ϱ} = (2v)^{-1/2} (n η² − A_n)`.
pub fn studentized_stat(ms: &ModeratedSpectrum<'_>, sample: &Sample) -> Result<f64> {
    let p = parts(ms, sample)?;
    if !(p.variance > 0.0) {
        return Err(Error::invalid("rho", "effective variance is zero"));
    }
    Ok(p.studentized())
}

/// `ϱ_n = c · n^{-2s(θ+1)/(4s+θ+1)}`.
pub fn rho_schedule(n: usize, s: f64, theta: f64, c: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::invalid("n", "need n >= 2"));
    }
    if !(s > 0.5) {
        return Err(Error::invalid("s", "need s > 1/2"));
    }
    if !(theta >= 0.0) || !theta.is_finite() {
        return Err(Error::invalid("theta", "need theta >= 0"));
    }
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::invalid("c", "need c > 0"));
    }
    Ok(c * (n as f64).powf(-2.0 * s * (theta + 1.0) / (4.0 * s + theta + 1.0)))
}

/// Dyadic grid `ρ_*, 2ρ_*, …, 2^{m_*}ρ_*`.
#[derive(Debug, Clone, PartialEq)]
pub struct RhoGrid {
    pub rho_star: f64,
    pub m_star: usize,
    pub values: Vec<f64>,
}

impl RhoGrid {
    pub fn new(rho_star: f64, m_star: usize) -> Result<Self> {
        if !(rho_star > 0.0) || !rho_star.is_finite() {
            return Err(Error::invalid("rho_star", "must be positive"));
        }
        let values = (0..=m_star).map(|k| rho_star * 2f64.powi(k as i32)).collect();
        Ok(RhoGrid {
            rho_star,
            m_star,
            values,
        })
    }
}

/// `ρ_* = (√(ln ln n)/n)^{2s}` and `m_* = ⌈log₂[ρ_*⁻¹ (√(ln ln n)/n)^{2s/(4s+1)}]⌉`.
pub fn adaptive_grid(n: usize, s: f64) -> Result<RhoGrid> {
    if n < 16 {
        return Err(Error::invalid("n", "the adaptive grid needs n >= 16"));
    }
    if !(s > 0.5) {
        return Err(Error::invalid("s", "need s > 1/2"));
    }
    let base = (n as f64).ln().ln().sqrt() / n as f64;
    let rho_star = base.powf(2.0 * s);
    let top = base.powf(2.0 * s / (4.0 * s + 1.0));
    let m = (top / rho_star).log2();
    let m_star = (m - 1e-9).ceil().max(0.0) as usize;
    RhoGrid::new(rho_star, m_star)
}

/// `√(3 ln ln n)`, the asymptotic threshold of the adaptive test.
pub fn theory_threshold(n: usize) -> Result<f64> {
    if n < 16 {
        return Err(Error::invalid("n", "the theory threshold needs n >= 16"));
    }
    Ok((3.0 * (n as f64).ln().ln()).sqrt())
}

/// Adaptive statistic and its maximizer.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveOutcome {
    pub statistic: f64,
    pub argmax_rho: f64,
    /// `T_{n,ϱ}` for each grid value.
    pub per_rho: Vec<f64>,
}

pub fn adaptive_from_projection(basis: &SpectralBasis, grid: &RhoGrid, proj: &Projection) -> Result<AdaptiveOutcome> {
    if grid.values.is_empty() {
        return Err(Error::invalid("grid", "grid must be nonempty"));
    }
    let mut per_rho = Vec::with_capacity(grid.values.len());
    let mut best = (f64::NEG_INFINITY, grid.values[0]);
    for &rho in &grid.values {
        let ms = ModeratedSpectrum::new(basis, rho)?;
        let t = m3d_parts(&ms, proj)?.studentized();
        if t > best.0 {
            best = (t, rho);
        }
        per_rho.push(t);
    }
    Ok(AdaptiveOutcome {
        statistic: best.0,
        argmax_rho: best.1,
        per_rho,
    })
}

/// `T̃_n = max_{0≤k≤m_*} T_{n, 2^k ρ_*}`; the sample is projected once for the whole grid.
pub fn adaptive_stat(basis: &SpectralBasis, grid: &RhoGrid, sample: &Sample) -> Result<AdaptiveOutcome> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    adaptive_from_projection(basis, grid, &basis.project(sample)?)
}

/// Test configuration beyond the basis and calibration.
#[derive(Debug, Clone, PartialEq)]
pub struct TestParams {
    pub alpha: f64,
    /// Moderation level for the M³d test.
    pub rho: Option<f64>,
    /// Grid for the adaptive test; defaults to [`adaptive_grid`] with the basis decay exponent.
    pub grid: Option<RhoGrid>,
}

/// Where a threshold came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub method: CalibrationMethod,
    pub replications: usize,
    pub seed: Option<u64>,
}

/// Outcome of one test.
#[derive(Debug, Clone, PartialEq)]
pub struct TestReport {
    pub kind: TestKind,
    pub n: usize,
    /// `nγ²` for MMD, `T_{n,ϱ}` for M³d, `T̃_n` for the adaptive test.
    pub statistic: f64,
    pub threshold: f64,
    pub p_value: Option<f64>,
    pub reject: bool,
    pub alpha: f64,
    pub provenance: Provenance,
    pub truncation: usize,
    pub rho: Option<f64>,
    pub grid: Option<RhoGrid>,
    pub argmax_rho: Option<f64>,
    /// For the adaptive test, the `√(3 ln ln n)` threshold reported next to the calibrated one.
    pub theory_threshold: Option<f64>,
}

impl TestReport {
    /// `key: value` lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut line = |k: &str, v: String| out.push_str(&format!("{k}: {v}\n"));
        line("test", self.kind.name().into());
        line("n", format!("{}", self.n));
        line("statistic", format!("{}", self.statistic));
        line("threshold", format!("{}", self.threshold));
        line(
            "p_value",
            self.p_value.map_or_else(|| "NA".into(), |p| format!("{p}")),
        );
        line("reject", format!("{}", self.reject));
        line("alpha", format!("{}", self.alpha));
        line("calibration", format!("{}", self.provenance.method));
        line("replications", format!("{}", self.provenance.replications));
        line(
            "seed",
            self.provenance.seed.map_or_else(|| "NA".into(), |s| format!("{s}")),
        );
        line("truncation", format!("{}", self.truncation));
        if let Some(r) = self.rho {
            line("rho", format!("{r}"));
        }
        if let Some(g) = &self.grid {
            line("rho_star", format!("{}", g.rho_star));
            line("m_star", format!("{}", g.m_star));
        }
        if let Some(r) = self.argmax_rho {
            line("argmax_rho", format!("{r}"));
        }
        if let Some(t) = self.theory_threshold {
            line("theory_threshold", format!("{t}"));
        }
        out
    }
}

/// Runs one test end to end: statistic, calibrated threshold and p-value.
pub fn run_test(
    basis: &SpectralBasis,
    sample: &Sample,
    kind: TestKind,
    params: &TestParams,
    calibration: &NullCalibration,
) -> Result<TestReport> {
    calibration.check_kind(kind)?;
    let cal = calibration.with_alpha(params.alpha)?;
    let n = sample.len();
    let proj = basis.project(sample)?;
    let (statistic, rho, grid, argmax_rho) = match kind {
        TestKind::Mmd => {
            if !basis.is_degenerate() {
                return Err(Error::NotDegenerate);
            }
            (n as f64 * mmd_from_projection(basis, &proj), None, None, None)
        }
        TestKind::M3d => {
            let rho = params
                .rho
                .ok_or_else(|| Error::invalid("rho", "the m3d test needs a moderation level"))?;
            let ms = ModeratedSpectrum::new(basis, rho)?;
            (m3d_parts(&ms, &proj)?.studentized(), Some(rho), None, None)
        }
        TestKind::Adaptive => {
            let grid = match &params.grid {
                Some(g) => g.clone(),
                None => adaptive_grid(n, basis.decay_exponent())?,
            };
            let out = adaptive_from_projection(basis, &grid, &proj)?;
            (out.statistic, None, Some(grid), Some(out.argmax_rho))
        }
    };
    let threshold = cal.quantile;
    Ok(TestReport {
        kind,
        n,
        statistic,
        threshold,
        p_value: cal.p_value(statistic),
        reject: statistic > threshold,
        alpha: params.alpha,
        provenance: Provenance {
            method: cal.method,
            replications: cal.replications,
            seed: cal.seed,
        },
        truncation: basis.len(),
        rho,
        grid,
        argmax_rho,
        theory_threshold: match kind {
            TestKind::Adaptive => theory_threshold(n).ok(),
            _ => None,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dists::NullModel;
    use crate::spectrum::eval_truncated;
    use alloc::sync::Arc;
    use alloc::vec;

    fn cosine(k: usize) -> SpectralBasis {
        SpectralBasis::cosine_reference(k).unwrap()
    }

    fn rank_one_half() -> SpectralBasis {
        // λ = 1 with ϱ = 1 gives λ̃ = ½.
        SpectralBasis::from_features(vec![1.0], Arc::new(|_, _| 1.0), vec![1.0], NullModel::UniformCube(1), "one", false)
            .unwrap()
    }

    fn random_sample(n: usize, seed: u64) -> Sample {
        crate::dists::AlternativeSpec::UniformCube { d: 1 }.sample(n, seed).unwrap()
    }

    #[test]
    fn symmetric_design_annihilates_low_frequencies() {
        let s = Sample::from_scalars(&[0.125, 0.375, 0.625, 0.875]).unwrap();
        assert!(mmd_vstat(&cosine(7), &s).unwrap().abs() < 1e-30);
    }

    #[test]
    fn single_point_mmd_is_the_kernel_diagonal() {
        let s = Sample::from_scalars(&[0.5]).unwrap();
        let v = mmd_vstat(&cosine(200_000), &s).unwrap();
        assert!((v - 1.0 / 12.0).abs() < 1e-6);
    }

    #[test]
    fn duplicating_points_leaves_mmd_unchanged() {
        let s = random_sample(15, 2);
        let doubled = s.concat(&s).unwrap();
        let b = cosine(40);
        let (a, c) = (mmd_vstat(&b, &s).unwrap(), mmd_vstat(&b, &doubled).unwrap());
        assert!((a - c).abs() < 1e-14 * a);
    }

    #[test]
    fn mmd_matches_pairwise_sum() {
        let s = random_sample(25, 3);
        let b = cosine(30);
        let mut total = 0.0;
        for x in s.points() {
            for y in s.points() {
                total += eval_truncated(&b, x, y);
            }
        }
        let pair = total / 625.0;
        assert!((mmd_vstat(&b, &s).unwrap() - pair).abs() < 1e-10 * pair);
    }

    #[test]
    fn non_degenerate_basis_is_refused() {
        let s = random_sample(5, 1);
        assert_eq!(mmd_vstat(&rank_one_half(), &s).unwrap_err(), Error::NotDegenerate);
    }

    #[test]
    fn rank_one_moderated_kernel() {
        let b = rank_one_half();
        let ms = ModeratedSpectrum::new(&b, 1.0).unwrap();
        let s = random_sample(9, 4);
        assert!((eta_sq_gram(&ms, &s).unwrap() - 0.5).abs() < 1e-15);
        assert!((diag_term(&ms, &s).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn gram_identity_on_random_samples() {
        let b = cosine(60);
        for seed in 0..10u64 {
            let s = random_sample(20, seed);
            let rho = 0.01 * (seed + 1) as f64;
            let ms = ModeratedSpectrum::new(&b, rho).unwrap();
            let (a, g) = (eta_sq(&ms, &s).unwrap(), eta_sq_gram(&ms, &s).unwrap());
            assert!((a - g).abs() <= 1e-10 * a.abs().max(g.abs()));
        }
    }

    #[test]
    fn gram_limit() {
        let s = random_sample(GRAM_LIMIT + 1, 0);
        let b = cosine(2);
        let ms = ModeratedSpectrum::new(&b, 0.1).unwrap();
        assert_eq!(
            eta_sq_gram(&ms, &s).unwrap_err(),
            Error::GramLimit {
                n: GRAM_LIMIT + 1,
                limit: GRAM_LIMIT
            }
        );
    }

    #[test]
    fn single_point_cases() {
        let b = cosine(20_000);
        let s = Sample::from_scalars(&[0.5]).unwrap();
        let ms = ModeratedSpectrum::new(&b, 0.1).unwrap();
        let closed = 5.0 / 5f64.tanh() - 1.0;
        assert!((eta_sq(&ms, &s).unwrap() - closed).abs() < 1e-3);
        assert!((diag_term(&ms, &s).unwrap() - closed).abs() < 1e-3);
        assert!((eta_sq_gram(&ms, &s).unwrap() - eta_sq(&ms, &s).unwrap()).abs() < 1e-12);
        assert_eq!(studentized_stat(&ms, &s).unwrap(), 0.0);
    }

    #[test]
    fn large_rho_recovers_mmd() {
        let b = cosine(50);
        let s = random_sample(30, 8);
        let rho: f64 = 1e3;
        let ms = ModeratedSpectrum::new(&b, rho).unwrap();
        let gamma = mmd_vstat(&b, &s).unwrap();
        let scaled = rho * rho * eta_sq(&ms, &s).unwrap();
        assert!((scaled - gamma).abs() <= gamma * b.eigenvalues()[0] / (rho * rho));
    }

    #[test]
    fn eta_is_nonincreasing_in_rho() {
        let b = cosine(50);
        let s = random_sample(30, 5);
        let mut prev = f64::INFINITY;
        for rho in [0.0, 0.01, 0.05, 0.1, 1.0, 10.0] {
            let v = eta_sq(&ModeratedSpectrum::new(&b, rho).unwrap(), &s).unwrap();
            assert!(v <= prev);
            prev = v;
        }
    }

    #[test]
    fn scale_coupling() {
        let b = cosine(80);
        let s = random_sample(40, 6);
        let c: f64 = 3.7;
        let bc = b.scaled(c).unwrap();
        let rho = 0.05;
        let ms = ModeratedSpectrum::new(&b, rho).unwrap();
        let mc = ModeratedSpectrum::new(&bc, c.sqrt() * rho).unwrap();
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(1e-300);
        assert!(rel(eta_sq(&ms, &s).unwrap(), eta_sq(&mc, &s).unwrap()) < 1e-12);
        assert!(rel(diag_term(&ms, &s).unwrap(), diag_term(&mc, &s).unwrap()) < 1e-12);
        assert!(rel(effective_variance(&ms), effective_variance(&mc)) < 1e-12);
        assert!(rel(studentized_stat(&ms, &s).unwrap(), studentized_stat(&mc, &s).unwrap()) < 1e-10);
    }

    #[test]
    fn schedule_examples() {
        assert!((rho_schedule(1000, 1.0, 0.0, 1.0).unwrap() - 0.063096).abs() < 1e-6);
        let r: Vec<f64> = [0.0, 1.0, 2.0].iter().map(|t| rho_schedule(1000, 1.0, *t, 1.0).unwrap()).collect();
        assert!(r[0] > r[1] && r[1] > r[2]);
        assert_eq!(rho_schedule(1000, 1.0, 0.0, 2.0).unwrap(), 2.0 * r[0]);
        assert!(rho_schedule(1, 1.0, 0.0, 1.0).is_err());
        assert!(rho_schedule(10, 0.5, 0.0, 1.0).is_err());
    }

    #[test]
    fn adaptive_grid_example() {
        let g = adaptive_grid(1000, 1.0).unwrap();
        assert!((g.rho_star - 1.9327e-6).abs() < 1e-9);
        assert_eq!(g.m_star, 16);
        assert_eq!(g.values.len(), 17);
        for (k, v) in g.values.iter().enumerate() {
            assert_eq!(*v, g.rho_star * (1u64 << k) as f64);
        }
        let base = 1000f64.ln().ln().sqrt() / 1000.0;
        assert!(*g.values.last().unwrap() <= 2.0 * base.powf(0.4));
        assert!(adaptive_grid(15, 1.0).is_err());
        assert!((theory_threshold(1000).unwrap() - 2.4079).abs() < 1e-4);
    }

    #[test]
    fn adaptive_dominates_grid_members() {
        let b = cosine(100);
        let s = random_sample(200, 9);
        let g = adaptive_grid(200, 1.0).unwrap();
        let out = adaptive_stat(&b, &g, &s).unwrap();
        for &rho in &g.values {
            let t = studentized_stat(&ModeratedSpectrum::new(&b, rho).unwrap(), &s).unwrap();
            assert!(out.statistic >= t);
        }
        let one = Sample::from_scalars(&[0.3]).unwrap();
        assert_eq!(adaptive_stat(&b, &g, &one).unwrap().statistic, 0.0);
    }

    #[test]
    fn statistics_are_permutation_invariant() {
        let b = cosine(64);
        let s = random_sample(50, 10);
        let mut order: Vec<usize> = (0..50).collect();
        order.reverse();
        order.swap(3, 17);
        let p = s.permuted(&order);
        let ms = ModeratedSpectrum::new(&b, 0.07).unwrap();
        assert_eq!(mmd_vstat(&b, &s).unwrap(), mmd_vstat(&b, &p).unwrap());
        assert_eq!(eta_sq(&ms, &s).unwrap(), eta_sq(&ms, &p).unwrap());
        assert_eq!(diag_term(&ms, &s).unwrap(), diag_term(&ms, &p).unwrap());
        assert_eq!(eta_sq_gram(&ms, &s).unwrap(), eta_sq_gram(&ms, &p).unwrap());
    }
}
