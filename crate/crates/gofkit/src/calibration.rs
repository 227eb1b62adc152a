//! Parallel null calibration and calibration files.
//!
//! The parallel routines evaluate exactly the replicates the sequential
//! versions in `gofkit_core::calibrate` do (same per-replicate seeds), so the
//! resulting thresholds are identical for any worker count.

use std::fs;
use std::path::Path;

use gofkit_core::calibrate::{
    chisq_mix_replicate, normal_calibration, replicate_seed, theory_calibration, CalibrationMethod, NullCalibration,
    DEFAULT_CHISQ_REPS, DEFAULT_EMPIRICAL_REPS,
};
use gofkit_core::dists::AlternativeSpec;
use gofkit_core::embedding::{
    adaptive_from_projection, adaptive_grid, m3d_parts, mmd_from_projection, rho_schedule, RhoGrid, TestKind,
};
use gofkit_core::sample::Sample;
use gofkit_core::spectrum::{ModeratedSpectrum, Projection, SpectralBasis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// How a test's null threshold is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CalibrationChoice {
    /// χ²-mixture Monte Carlo (MMD only).
    Chisq { reps: usize },
    /// Standard normal quantile (M³d only).
    Normal,
    /// `√(3 ln ln n)` (adaptive only).
    Theory,
    /// Statistic recomputed on fresh null samples.
    Empirical { reps: usize },
}

impl CalibrationChoice {
    /// Parses `chisq[:R]`, `normal`, `theory`, `empirical[:R]`, or `mc[:R]`
    /// (the Monte-Carlo default for `kind`: χ² mixture for MMD, empirical otherwise).
    pub fn parse(text: &str, kind: TestKind) -> Result<Self> {
        let (name, reps) = match text.trim().split_once(':') {
            Some((n, r)) => (
                n,
                Some(r.parse::<usize>().map_err(|_| {
                    Error::invalid("calibrate", format!("`{r}` is not a replication count"))
                })?),
            ),
            None => (text.trim(), None),
        };
        let choice = match name {
            "chisq" => CalibrationChoice::Chisq {
                reps: reps.unwrap_or(DEFAULT_CHISQ_REPS),
            },
            "normal" => CalibrationChoice::Normal,
            "theory" => CalibrationChoice::Theory,
            "empirical" => CalibrationChoice::Empirical {
                reps: reps.unwrap_or(DEFAULT_EMPIRICAL_REPS),
            },
            "mc" => match kind {
                TestKind::Mmd => CalibrationChoice::Chisq {
                    reps: reps.unwrap_or(DEFAULT_CHISQ_REPS),
                },
                _ => CalibrationChoice::Empirical {
                    reps: reps.unwrap_or(DEFAULT_EMPIRICAL_REPS),
                },
            },
            other => return Err(Error::invalid("calibrate", format!("unknown calibration `{other}`"))),
        };
        if !choice.method().supports(kind) {
            return Err(gofkit_core::Error::IncompatibleCalibration {
                method: choice.method(),
                kind,
            }
            .into());
        }
        Ok(choice)
    }

    /// Default: χ² mixture for MMD, normal for M³d, empirical for the adaptive test.
    pub fn default_for(kind: TestKind) -> Self {
        match kind {
            TestKind::Mmd => CalibrationChoice::Chisq {
                reps: DEFAULT_CHISQ_REPS,
            },
            TestKind::M3d => CalibrationChoice::Normal,
            TestKind::Adaptive => CalibrationChoice::Empirical {
                reps: DEFAULT_EMPIRICAL_REPS,
            },
        }
    }

    pub fn method(&self) -> CalibrationMethod {
        match self {
            CalibrationChoice::Chisq { .. } => CalibrationMethod::ChisqMixtureMc,
            CalibrationChoice::Normal => CalibrationMethod::Normal,
            CalibrationChoice::Theory => CalibrationMethod::TheoryLogLog,
            CalibrationChoice::Empirical { .. } => CalibrationMethod::EmpiricalMc,
        }
    }

    pub fn needs_seed(&self) -> bool {
        self.method().is_monte_carlo()
    }
}

impl std::fmt::Display for CalibrationChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CalibrationChoice::Chisq { reps } => write!(f, "chisq:{reps}"),
            CalibrationChoice::Normal => f.write_str("normal"),
            CalibrationChoice::Theory => f.write_str("theory"),
            CalibrationChoice::Empirical { reps } => write!(f, "empirical:{reps}"),
        }
    }
}

/// The moderation setting of an M³d test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RhoChoice {
    Fixed(f64),
    /// `ϱ = c · n^{-2s(θ+1)/(4s+θ+1)}` with the basis decay exponent `s`.
    Schedule { theta: f64, c: f64 },
}

impl RhoChoice {
    pub fn resolve(&self, basis: &SpectralBasis, n: usize) -> Result<f64> {
        match *self {
            RhoChoice::Fixed(r) => Ok(r),
            RhoChoice::Schedule { theta, c } => Ok(rho_schedule(n, basis.decay_exponent(), theta, c)?),
        }
    }
}

/// A statistic evaluated from a projection: everything but the calibration.
#[derive(Debug, Clone, PartialEq)]
pub enum StatisticSpec {
    Mmd,
    M3d { rho: f64 },
    Adaptive { grid: RhoGrid },
}

impl StatisticSpec {
    pub fn new(kind: TestKind, basis: &SpectralBasis, n: usize, rho: Option<RhoChoice>, grid: Option<RhoGrid>) -> Result<Self> {
        Ok(match kind {
            TestKind::Mmd => {
                if !basis.is_degenerate() {
                    return Err(gofkit_core::Error::NotDegenerate.into());
                }
                StatisticSpec::Mmd
            }
            TestKind::M3d => StatisticSpec::M3d {
                rho: rho.ok_or(Error::Missing("rho"))?.resolve(basis, n)?,
            },
            TestKind::Adaptive => StatisticSpec::Adaptive {
                grid: match grid {
                    Some(g) => g,
                    None => adaptive_grid(n, basis.decay_exponent())?,
                },
            },
        })
    }

    pub fn kind(&self) -> TestKind {
        match self {
            StatisticSpec::Mmd => TestKind::Mmd,
            StatisticSpec::M3d { .. } => TestKind::M3d,
            StatisticSpec::Adaptive { .. } => TestKind::Adaptive,
        }
    }

    pub fn evaluate(&self, basis: &SpectralBasis, proj: &Projection) -> Result<f64> {
        Ok(match self {
            StatisticSpec::Mmd => proj.n as f64 * mmd_from_projection(basis, proj),
            StatisticSpec::M3d { rho } => m3d_parts(&ModeratedSpectrum::new(basis, *rho)?, proj)?.studentized(),
            StatisticSpec::Adaptive { grid } => adaptive_from_projection(basis, grid, proj)?.statistic,
        })
    }

    pub fn on_sample(&self, basis: &SpectralBasis, sample: &Sample) -> Result<f64> {
        self.evaluate(basis, &basis.project(sample)?)
    }
}

/// Runs `f` on a pool of `workers` threads (all cores when `None`).
pub fn with_workers<R: Send>(workers: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    match workers {
        None => Ok(f()),
        Some(0) => Err(Error::invalid("workers", "need at least one worker")),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| Error::Numeric(format!("cannot start worker pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Parallel χ²-mixture calibration; identical to the sequential version.
pub fn chisq_mix_parallel(basis: &SpectralBasis, alpha: f64, reps: usize, seed: u64) -> Result<NullCalibration> {
    let eig = basis.eigenvalues();
    let mult = basis.multiplicities();
    let replicates: Vec<f64> = (0..reps as u64)
        .into_par_iter()
        .map(|r| chisq_mix_replicate(eig, mult, seed, r))
        .collect();
    let mut cal = NullCalibration::from_replicates(CalibrationMethod::ChisqMixtureMc, alpha, replicates, seed)?;
    cal.kind = Some(TestKind::Mmd);
    cal.truncation_bias = basis.tail().map(|t| t.tail_mass(basis.dimension() as usize));
    Ok(cal)
}

/// Parallel empirical calibration; replicate `r` uses the null sample with
/// seed `replicate_seed(seed, r)`, as the sequential version does.
pub fn empirical_parallel(
    basis: &SpectralBasis,
    statistic: &StatisticSpec,
    null: &AlternativeSpec,
    n: usize,
    alpha: f64,
    reps: usize,
    seed: u64,
) -> Result<NullCalibration> {
    let replicates = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let sample = null.sample(n, replicate_seed(seed, r))?;
            statistic.on_sample(basis, &sample)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut cal = NullCalibration::from_replicates(CalibrationMethod::EmpiricalMc, alpha, replicates, seed)?;
    cal.kind = Some(statistic.kind());
    cal.n = Some(n);
    Ok(cal)
}

/// Builds the calibration `choice` for `statistic` at sample size `n`.
pub fn calibrate(
    basis: &SpectralBasis,
    statistic: &StatisticSpec,
    choice: CalibrationChoice,
    n: usize,
    alpha: f64,
    seed: Option<u64>,
) -> Result<NullCalibration> {
    let kind = statistic.kind();
    if !choice.method().supports(kind) {
        return Err(gofkit_core::Error::IncompatibleCalibration {
            method: choice.method(),
            kind,
        }
        .into());
    }
    let seed = || seed.ok_or(Error::Missing("seed"));
    match choice {
        CalibrationChoice::Chisq { reps } => chisq_mix_parallel(basis, alpha, reps, seed()?),
        CalibrationChoice::Normal => Ok(normal_calibration(alpha)?),
        CalibrationChoice::Theory => Ok(theory_calibration(n, alpha)?),
        CalibrationChoice::Empirical { reps } => {
            let null = basis.null().as_spec()?;
            empirical_parallel(basis, statistic, &null, n, alpha, reps, seed()?)
        }
    }
}

const FILE_FORMAT: &str = "gofkit-calibration v1";

#[derive(Debug, Serialize, Deserialize)]
struct CalibrationFile {
    format: String,
    method: String,
    kind: Option<String>,
    alpha: f64,
    quantile: f64,
    replications: usize,
    seed: Option<String>,
    n: Option<usize>,
    truncation_bias: Option<f64>,
    spectrum: Option<String>,
    replicates: Option<Vec<f64>>,
}

/// Writes a calibration as TOML, including sorted replicates when present.
pub fn save_calibration(cal: &NullCalibration, spectrum: Option<&str>, path: &Path) -> Result<()> {
    let file = CalibrationFile {
        format: FILE_FORMAT.into(),
        method: cal.method.name().into(),
        kind: cal.kind.map(|k| k.name().into()),
        alpha: cal.alpha,
        quantile: cal.quantile,
        replications: cal.replications,
        seed: cal.seed.map(|s| s.to_string()),
        n: cal.n,
        truncation_bias: cal.truncation_bias,
        spectrum: spectrum.map(String::from),
        replicates: cal.replicates.clone(),
    };
    let text = toml::to_string(&file).map_err(|e| Error::Numeric(format!("cannot serialize calibration: {e}")))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads a calibration file; returns it with the spectrum id it was built for.
pub fn load_calibration(path: &Path) -> Result<(NullCalibration, Option<String>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: CalibrationFile = toml::from_str(&text).map_err(|e| {
        let line = e.span().map_or(1, |s| text[..s.start].lines().count().max(1));
        Error::format(path, line, e.message().to_string())
    })?;
    if file.format != FILE_FORMAT {
        return Err(Error::format(path, 1, format!("unsupported calibration format `{}`", file.format)));
    }
    let seed = file
        .seed
        .map(|s| s.parse::<u64>().map_err(|_| Error::format(path, 1, "bad seed")))
        .transpose()?;
    let cal = NullCalibration {
        method: CalibrationMethod::parse(&file.method)?,
        alpha: file.alpha,
        quantile: file.quantile,
        replications: file.replications,
        seed,
        replicates: file.replicates,
        kind: file.kind.as_deref().map(TestKind::parse).transpose()?,
        n: file.n,
        truncation_bias: file.truncation_bias,
    };
    Ok((cal, file.spectrum))
}
