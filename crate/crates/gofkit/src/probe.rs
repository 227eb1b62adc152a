//! Empirical detection boundaries against least-favorable spectral alternatives.
//!
//! For each `n` and separation `Δ` the power of a test is estimated from
//! `reps` replicates. Each replicate draws its own least-favorable alternative
//! (fresh random signs for the multi-frequency construction) and a sample of
//! size `n` from it. The empirical boundary at `n` is the smallest `Δ` whose
//! power reaches one half, linearly interpolated between grid points; the
//! reported slope is the least-squares slope of `log Δ_n` against `log n`.

use std::sync::Arc;

use gofkit_core::calibrate::NullCalibration;
use gofkit_core::dists::{least_favorable, LeastFavorable};
use gofkit_core::embedding::TestKind;
use gofkit_core::rng::derive_seed;
use gofkit_core::spectrum::SpectralBasis;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{calibrate, CalibrationChoice, RhoChoice, StatisticSpec};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeConfig {
    pub kind: TestKind,
    /// Smoothness used by the construction and the `ϱ` schedule.
    pub s: f64,
    pub theta: f64,
    pub ns: Vec<usize>,
    /// Separation grid, increasing. The separation used at `n` is `δ · n^{delta_exponent}`.
    pub deltas: Vec<f64>,
    pub delta_exponent: f64,
    pub reps: usize,
    pub alpha: f64,
    pub seed: u64,
    pub construction: LeastFavorable,
    /// Constant of the `ϱ` schedule for M³d.
    pub rho_c: f64,
    pub calibration: CalibrationChoice,
}

impl ProbeConfig {
    /// M³d with the theoretical `ϱ` schedule and normal calibration, multi-frequency alternatives.
    pub fn m3d(s: f64, theta: f64, ns: Vec<usize>, deltas: Vec<f64>, reps: usize, seed: u64) -> Self {
        ProbeConfig {
            kind: TestKind::M3d,
            s,
            theta,
            ns,
            deltas,
            delta_exponent: 0.0,
            reps,
            alpha: 0.05,
            seed,
            construction: LeastFavorable::MultiFrequency { c: 1.0 },
            rho_c: 1.0,
            calibration: CalibrationChoice::Normal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub n: usize,
    pub delta: f64,
    pub power: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeResult {
    pub rows: Vec<ProbeRow>,
    /// Empirical boundary per `n` (`None` when power never reaches one half on the grid).
    pub boundaries: Vec<(usize, Option<f64>)>,
    /// Slope of `log Δ_n` on `log n` over the `n` with a boundary (needs two).
    pub slope: Option<f64>,
}

/// Smallest `Δ` with power ≥ ½, linearly interpolated between adjacent grid points.
pub fn empirical_boundary(deltas: &[f64], power: &[f64]) -> Option<f64> {
    let i = power.iter().position(|p| *p >= 0.5)?;
    if i == 0 {
        return Some(deltas[0]);
    }
    let (d0, d1, p0, p1) = (deltas[i - 1], deltas[i], power[i - 1], power[i]);
    Some(d0 + (0.5 - p0) / (p1 - p0) * (d1 - d0))
}

/// Least-squares slope of `y` on `x`.
pub fn ls_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 2 || x.len() != y.len() {
        return None;
    }
    let m = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / m, y.iter().sum::<f64>() / m);
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

pub fn boundary_probe(basis: Arc<SpectralBasis>, cfg: &ProbeConfig) -> Result<ProbeResult> {
    if cfg.ns.is_empty() || cfg.deltas.is_empty() || cfg.reps == 0 {
        return Err(Error::invalid("probe", "need sample sizes, separations and replications"));
    }
    if cfg.deltas.windows(2).any(|w| !(w[1] > w[0])) || cfg.deltas[0] < 0.0 {
        return Err(Error::invalid("deltas", "separations must be nonnegative and increasing"));
    }
    let mut rows = Vec::new();
    let mut boundaries = Vec::new();
    for (ni, &n) in cfg.ns.iter().enumerate() {
        let rho = RhoChoice::Schedule {
            theta: cfg.theta,
            c: cfg.rho_c,
        };
        let basis_s = basis.as_ref().clone().with_decay_exponent(cfg.s);
        let statistic = StatisticSpec::new(cfg.kind, &basis_s, n, Some(rho), None)?;
        let cal: NullCalibration = calibrate(
            &basis_s,
            &statistic,
            cfg.calibration,
            n,
            cfg.alpha,
            Some(derive_seed(&[cfg.seed, 0xCA11, n as u64])),
        )?;
        let scale = (n as f64).powf(cfg.delta_exponent);
        let mut power = Vec::with_capacity(cfg.deltas.len());
        for (di, &delta) in cfg.deltas.iter().enumerate() {
            let d = delta * scale;
            // Validate the construction once so configuration errors surface directly.
            least_favorable(basis.clone(), n, cfg.s, cfg.theta, d, cfg.seed, cfg.construction)?;
            let rejections = (0..cfg.reps as u64)
                .into_par_iter()
                .map(|r| -> Result<bool> {
                    let key = derive_seed(&[cfg.seed, ni as u64, di as u64, r]);
                    let alt = least_favorable(basis.clone(), n, cfg.s, cfg.theta, d, key, cfg.construction)?;
                    let sample = alt.sample(n, derive_seed(&[key, 1]))?;
                    Ok(statistic.on_sample(&basis_s, &sample)? > cal.quantile)
                })
                .collect::<Result<Vec<bool>>>()?
                .into_iter()
                .filter(|x| *x)
                .count();
            let p = rejections as f64 / cfg.reps as f64;
            power.push(p);
            rows.push(ProbeRow {
                n,
                delta: d,
                power: p,
                threshold: cal.quantile,
            });
        }
        let scaled: Vec<f64> = cfg.deltas.iter().map(|d| d * scale).collect();
        boundaries.push((n, empirical_boundary(&scaled, &power)));
    }
    let (lx, ly): (Vec<f64>, Vec<f64>) = boundaries
        .iter()
        .filter_map(|(n, b)| b.filter(|b| *b > 0.0).map(|b| ((*n as f64).ln(), b.ln())))
        .unzip();
    Ok(ProbeResult {
        rows,
        boundaries,
        slope: ls_slope(&lx, &ly),
    })
}
