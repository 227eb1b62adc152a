//! Spectral (Mercer) decompositions of kernels relative to a null distribution.
//!
//! A [`SpectralBasis`] stores eigenvalues grouped in blocks. Bases with explicit
//! eigenfunctions (Nyström, cosine, tensor products, user features) have one
//! eigenfunction per block. Zonal kernels on the sphere group each harmonic
//! degree into a single block with its multiplicity, and evaluate block sums
//! `Σ_{k∈b} φ_k(x)φ_k(y)` through the addition theorem instead of
//! materializing individual harmonics.

mod nystrom;
mod sphere;
mod tensor;

pub use nystrom::{default_node_count, default_truncation, nystrom_decompose, nystrom_spectrum, NystromParts};
pub use sphere::{sphere_zonal_spectrum, zonal_degree_eigenvalues, ZonalParts};
pub use tensor::{tensor_product_basis, tensor_product_basis_with, TensorConfig, TensorParts};

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{PI, SQRT_2};
use core::fmt;
#[allow(unused_imports)]
use num_traits::Float;

use crate::dists::NullModel;
use crate::quadrature::gauss_legendre;
use crate::sample::{Domain, Sample};
use crate::{Error, Result};

/// Explicit eigenfunction `(k, x) -> φ_k(x)` with zero-based `k`.
pub type FeatureFn = Arc<dyn Fn(usize, &[f64]) -> f64 + Send + Sync>;

/// Power-law model `λ_k ≈ scale · k^{-2·exponent}` for the eigenvalues beyond the truncation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerTail {
    pub scale: f64,
    pub exponent: f64,
}

impl PowerTail {
    fn eigenvalue(&self, k: f64) -> f64 {
        self.scale * k.powf(-2.0 * self.exponent)
    }

    /// `Σ_{k>K} λ_k`, approximated by `∫_{K+½}^∞`.
    pub fn tail_mass(&self, truncation: usize) -> f64 {
        let s2 = 2.0 * self.exponent;
        if s2 <= 1.0 {
            return f64::INFINITY;
        }
        self.scale * (truncation as f64 + 0.5).powf(1.0 - s2) / (s2 - 1.0)
    }

    /// `Σ_{k>K} (λ_k / (λ_k + ϱ²))²`, approximated by `∫_{K+½}^∞`.
    pub fn tail_moderated_sq(&self, truncation: usize, rho: f64) -> f64 {
        if rho == 0.0 {
            return f64::INFINITY;
        }
        let r2 = rho * rho;
        let f = |y: f64| {
            let x = y.exp();
            let l = self.eigenvalue(x);
            let m = l / (l + r2);
            m * m * x
        };
        // Composite Gauss–Legendre in log k, unit-width panels.
        let (t, w) = gauss_legendre(16);
        let start = (truncation as f64 + 0.5).ln();
        let mut total = 0.0;
        for panel in 0..200 {
            let a = start + panel as f64;
            let part: f64 = t.iter().zip(&w).map(|(t, w)| 0.5 * w * f(a + 0.5 + 0.5 * t)).sum();
            total += part;
            if part < 1e-16 * total {
                break;
            }
        }
        total
    }
}

#[derive(Clone)]
pub(crate) enum Evaluator {
    Cosine,
    Features { f: FeatureFn, sup: Vec<f64> },
    Nystrom(Arc<nystrom::NystromEval>),
    Tensor(Arc<tensor::TensorEval>),
    Zonal(Arc<sphere::ZonalEval>),
}

/// Eigenvalues, eigenfunction evaluator and metadata for a kernel under `P₀`.
#[derive(Clone)]
pub struct SpectralBasis {
    eigenvalues: Vec<f64>,
    multiplicities: Vec<f64>,
    decay: f64,
    null: NullModel,
    kernel_id: String,
    degenerate: bool,
    tail: Option<PowerTail>,
    eval: Evaluator,
}

impl fmt::Debug for SpectralBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralBasis")
            .field("kernel", &self.kernel_id)
            .field("null", &self.null)
            .field("blocks", &self.eigenvalues.len())
            .field("decay", &self.decay)
            .field("degenerate", &self.degenerate)
            .finish()
    }
}

fn check_eigenvalues(eigenvalues: &[f64]) -> Result<()> {
    if eigenvalues.is_empty() {
        return Err(Error::invalid("eigenvalues", "basis needs at least one eigenvalue"));
    }
    if let Some(i) = eigenvalues.iter().position(|l| !(*l > 0.0) || !l.is_finite()) {
        return Err(Error::NonPositiveEigenvalue {
            index: i + 1,
            value: eigenvalues[i],
        });
    }
    if eigenvalues.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::invalid("eigenvalues", "eigenvalues must be nonincreasing"));
    }
    Ok(())
}

impl SpectralBasis {
    pub(crate) fn assemble(
        eigenvalues: Vec<f64>,
        multiplicities: Vec<f64>,
        null: NullModel,
        kernel_id: String,
        degenerate: bool,
        eval: Evaluator,
    ) -> Result<Self> {
        check_eigenvalues(&eigenvalues)?;
        let decay = fitted_decay(&eigenvalues, &multiplicities);
        Ok(SpectralBasis {
            eigenvalues,
            multiplicities,
            decay,
            null,
            kernel_id,
            degenerate,
            tail: None,
            eval,
        })
    }

    /// The cosine reference basis on `[0,1]` under Uniform[0,1]: `λ_k = (kπ)⁻²`,
    /// `φ_k(x) = √2 cos(kπx)`, `k = 1..K`. Carries its exact power-law tail.
    pub fn cosine_reference(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("K", "truncation must be positive"));
        }
        let eigenvalues = (1..=k).map(|j| 1.0 / (j as f64 * PI).powi(2)).collect();
        let mut basis = SpectralBasis::assemble(
            eigenvalues,
            vec![1.0; k],
            NullModel::UniformCube(1),
            "cosine".into(),
            true,
            Evaluator::Cosine,
        )?;
        basis.decay = 1.0;
        basis.tail = Some(PowerTail {
            scale: 1.0 / (PI * PI),
            exponent: 1.0,
        });
        Ok(basis)
    }

    /// Basis from explicit eigenfunctions. `sup_norms[k]` bounds `‖φ_k‖_∞`.
    pub fn from_features(
        eigenvalues: Vec<f64>,
        features: FeatureFn,
        sup_norms: Vec<f64>,
        null: NullModel,
        kernel_id: impl Into<String>,
        degenerate: bool,
    ) -> Result<Self> {
        if sup_norms.len() != eigenvalues.len() {
            return Err(Error::invalid("sup_norms", "one bound per eigenvalue is required"));
        }
        let k = eigenvalues.len();
        SpectralBasis::assemble(
            eigenvalues,
            vec![1.0; k],
            null,
            kernel_id.into(),
            degenerate,
            Evaluator::Features { f: features, sup: sup_norms },
        )
    }

    /// Number of eigenvalue blocks (the truncation `K` for bases with explicit eigenfunctions).
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Eigenvalue of each block, nonincreasing.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Number of eigenfunctions sharing each block's eigenvalue.
    pub fn multiplicities(&self) -> &[f64] {
        &self.multiplicities
    }

    /// Total number of retained eigenfunctions, `Σ` multiplicities.
    pub fn dimension(&self) -> f64 {
        self.multiplicities.iter().sum()
    }

    /// Decay exponent `s` in `λ_k ≍ k^{-2s}`.
    pub fn decay_exponent(&self) -> f64 {
        self.decay
    }

    pub fn with_decay_exponent(mut self, s: f64) -> Self {
        self.decay = s;
        self
    }

    pub fn tail(&self) -> Option<PowerTail> {
        self.tail
    }

    pub fn with_tail(mut self, tail: Option<PowerTail>) -> Self {
        self.tail = tail;
        self
    }

    pub fn null(&self) -> &NullModel {
        &self.null
    }

    pub fn domain(&self) -> Domain {
        self.null.domain()
    }

    pub fn kernel_id(&self) -> &str {
        &self.kernel_id
    }

    /// Whether `E_{P₀} φ_k = 0` holds for every retained eigenfunction.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn has_features(&self) -> bool {
        !matches!(self.eval, Evaluator::Zonal(_))
    }

    /// Keeps the first `k` blocks.
    pub fn truncated(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.len() {
            return Err(Error::invalid(
                "K",
                alloc::format!("truncation must be in 1..={}", self.len()),
            ));
        }
        let mut out = self.clone();
        out.eigenvalues.truncate(k);
        out.multiplicities.truncate(k);
        if let Evaluator::Features { sup, .. } = &mut out.eval {
            sup.truncate(k);
        }
        if out.tail.is_some() && k < self.len() {
            out.tail = None;
        }
        Ok(out)
    }

    /// Multiplies every eigenvalue by `c > 0`; eigenfunctions are unchanged.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::invalid("c", "scale must be positive"));
        }
        let mut out = self.clone();
        out.eigenvalues.iter_mut().for_each(|l| *l *= c);
        if let Some(t) = &mut out.tail {
            t.scale *= c;
        }
        Ok(out)
    }

    /// Writes `φ_k(x)` for `k < out.len()` (at most `len()`).
    pub fn features(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        if out.len() > self.len() {
            return Err(Error::invalid("out", "more features requested than the basis holds"));
        }
        match &self.eval {
            Evaluator::Cosine => {
                cosine_features(x[0], out);
                Ok(())
            }
            Evaluator::Features { f, .. } => {
                for (k, o) in out.iter_mut().enumerate() {
                    *o = f(k, x);
                }
                Ok(())
            }
            Evaluator::Nystrom(n) => {
                n.features(x, out);
                Ok(())
            }
            Evaluator::Tensor(t) => t.features(x, out),
            Evaluator::Zonal(_) => Err(Error::FeaturesUnavailable),
        }
    }

    /// Single eigenfunction `φ_k(x)`, zero-based `k`.
    pub fn feature(&self, k: usize, x: &[f64]) -> Result<f64> {
        let mut buf = vec![0.0; k + 1];
        self.features(x, &mut buf)?;
        Ok(buf[k])
    }

    /// Bounds on `‖φ_k‖_∞`. Nyström bases report the largest observed node
    /// amplitude, which is not a certified bound.
    pub fn sup_norms(&self) -> Result<Vec<f64>> {
        match &self.eval {
            Evaluator::Cosine => Ok(vec![SQRT_2; self.len()]),
            Evaluator::Features { sup, .. } => Ok(sup.clone()),
            Evaluator::Nystrom(n) => Ok(n.node_amplitudes(self.len())),
            Evaluator::Tensor(t) => t.sup_norms(self.len()),
            Evaluator::Zonal(_) => Err(Error::FeaturesUnavailable),
        }
    }

    /// `out[b] = Σ_{k∈b} φ_k(x) φ_k(y)` for every block.
    pub fn block_products(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        let k = self.len();
        match &self.eval {
            Evaluator::Zonal(z) => z.block_products(x, y, &mut out[..k]),
            _ => {
                let mut fy = vec![0.0; k];
                // Feature bases cannot fail here.
                self.features(x, &mut out[..k]).ok();
                self.features(y, &mut fy).ok();
                for (o, b) in out.iter_mut().zip(&fy) {
                    *o *= b;
                }
            }
        }
    }

    /// Per-block energies of the sample's empirical mean embedding.
    pub fn project(&self, sample: &Sample) -> Result<Projection> {
        if sample.domain() != self.domain() {
            return Err(Error::DomainMismatch {
                expected: self.domain(),
                found: sample.domain(),
            });
        }
        let order = sample.canonical_order();
        let n = order.len();
        let k = self.len();
        let nf = n as f64;
        match &self.eval {
            Evaluator::Zonal(z) => {
                let mut acc = vec![0.0; k];
                let mut buf = vec![0.0; k];
                for (a, &i) in order.iter().enumerate() {
                    for &j in &order[a + 1..] {
                        z.block_products(sample.point(i), sample.point(j), &mut buf);
                        for (s, v) in acc.iter_mut().zip(&buf) {
                            *s += 2.0 * v;
                        }
                    }
                }
                let energies = acc
                    .iter()
                    .zip(&self.multiplicities)
                    .map(|(s, m)| (s + nf * m) / (nf * nf))
                    .collect();
                Ok(Projection {
                    n,
                    energies,
                    diagonal: self.multiplicities.clone(),
                })
            }
            _ => {
                let mut sum = vec![0.0; k];
                let mut sq = vec![0.0; k];
                let mut buf = vec![0.0; k];
                for &i in &order {
                    self.features(sample.point(i), &mut buf)?;
                    for ((s, q), v) in sum.iter_mut().zip(sq.iter_mut()).zip(&buf) {
                        *s += v;
                        *q += v * v;
                    }
                }
                Ok(Projection {
                    n,
                    energies: sum.iter().map(|s| (s / nf) * (s / nf)).collect(),
                    diagonal: sq.iter().map(|q| q / nf).collect(),
                })
            }
        }
    }

    pub(crate) fn evaluator(&self) -> &Evaluator {
        &self.eval
    }
}

/// Sample summary sufficient for every statistic: per-block
/// `E_b = Σ_{k∈b} (n⁻¹ Σ_i φ_k(X_i))²` and `D_b = n⁻¹ Σ_i Σ_{k∈b} φ_k(X_i)²`.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub n: usize,
    pub energies: Vec<f64>,
    pub diagonal: Vec<f64>,
}

/// `√2 cos(kπx)` for `k = 1..=out.len()`, by angle-addition re-anchored every 32 terms.
fn cosine_features(x: f64, out: &mut [f64]) {
    let theta = PI * x;
    let (s1, c1) = theta.sin_cos();
    for (chunk_idx, chunk) in out.chunks_mut(32).enumerate() {
        let k0 = (chunk_idx * 32 + 1) as f64;
        let (mut s, mut c) = (k0 * theta).sin_cos();
        for o in chunk.iter_mut() {
            *o = SQRT_2 * c;
            let next_c = c * c1 - s * s1;
            s = s * c1 + c * s1;
            c = next_c;
        }
    }
}

/// `Σ_{k≤K} λ_k φ_k(x) φ_k(y)`.
pub fn eval_truncated(basis: &SpectralBasis, x: &[f64], y: &[f64]) -> f64 {
    let mut buf = vec![0.0; basis.len()];
    basis.block_products(x, y, &mut buf);
    buf.iter().zip(basis.eigenvalues()).map(|(z, l)| z * l).sum()
}

/// A basis together with a moderation level `ϱ`, exposing `λ_k / (λ_k + ϱ²)`.
#[derive(Debug, Clone)]
pub struct ModeratedSpectrum<'a> {
    basis: &'a SpectralBasis,
    rho: f64,
    moderated: Vec<f64>,
}

impl<'a> ModeratedSpectrum<'a> {
    /// `rho = 0` gives the projection kernel; `rho = ∞` gives the zero kernel.
    pub fn new(basis: &'a SpectralBasis, rho: f64) -> Result<Self> {
        if !(rho >= 0.0) {
            return Err(Error::invalid("rho", "moderation must be nonnegative"));
        }
        let r2 = rho * rho;
        let moderated = basis
            .eigenvalues()
            .iter()
            .map(|&l| if r2.is_infinite() { 0.0 } else { l / (l + r2) })
            .collect();
        Ok(ModeratedSpectrum { basis, rho, moderated })
    }

    pub fn basis(&self) -> &'a SpectralBasis {
        self.basis
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn moderated_eigenvalues(&self) -> &[f64] {
        &self.moderated
    }
}

/// `K̃_ϱ(x,y) = Σ_{k≤K} [λ_k / (λ_k + ϱ²)] φ_k(x) φ_k(y)`.
pub fn moderated_eval(ms: &ModeratedSpectrum<'_>, x: &[f64], y: &[f64]) -> f64 {
    let mut buf = vec![0.0; ms.basis.len()];
    ms.basis.block_products(x, y, &mut buf);
    buf.iter().zip(&ms.moderated).map(|(z, m)| z * m).sum()
}

/// `v = Σ_k (λ_k / (λ_k + ϱ²))²` over the retained spectrum.
pub fn effective_variance(ms: &ModeratedSpectrum<'_>) -> f64 {
    ms.moderated
        .iter()
        .zip(ms.basis.multiplicities())
        .map(|(v, m)| m * v * v)
        .sum()
}

/// Effective variance with the analytic tail `Σ_{k>K}` added when the basis
/// carries a power-law tail model. Returns `(total, tail part)`; the tail part
/// doubles as the truncation-error bound of [`effective_variance`].
pub fn effective_variance_with_tail(ms: &ModeratedSpectrum<'_>) -> (f64, Option<f64>) {
    let head = effective_variance(ms);
    match ms.basis.tail() {
        Some(t) => {
            let tail = t.tail_moderated_sq(ms.basis.dimension() as usize, ms.rho);
            (head + tail, Some(tail))
        }
        None => (head, None),
    }
}

/// Result of a log-log eigenvalue fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub exponent: f64,
    /// Set when the local slope steepens across the window, the signature of
    /// faster-than-polynomial decay.
    pub super_polynomial: bool,
}

fn ls_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// Fits `s` in `λ_k ≍ k^{-2s}` by least squares of `log λ_k` on `log k` over
/// `k ∈ [K/4, K]`, returning `-slope / 2`.
pub fn estimate_decay_exponent(eigenvalues: &[f64]) -> Result<DecayFit> {
    let k = eigenvalues.len();
    if k < 8 {
        return Err(Error::TooFew { needed: 8, got: k });
    }
    let start = k.div_ceil(4).max(1);
    let mut points = Vec::with_capacity(k - start + 1);
    for idx in start..=k {
        let l = eigenvalues[idx - 1];
        if !(l > 0.0) {
            return Err(Error::NonPositiveEigenvalue { index: idx, value: l });
        }
        points.push(((idx as f64).ln(), l.ln()));
    }
    let slope = ls_slope(&points);
    let mid = points.len() / 2;
    let lower = ls_slope(&points[..=mid]);
    let upper = ls_slope(&points[mid..]);
    Ok(DecayFit {
        exponent: -slope / 2.0,
        super_polynomial: upper < 1.25 * lower,
    })
}

/// Decay exponent of a block spectrum, indexing each block by its cumulative
/// eigenfunction count. Falls back to 1 when the spectrum is too short.
fn fitted_decay(eigenvalues: &[f64], multiplicities: &[f64]) -> f64 {
    if multiplicities.iter().all(|m| *m == 1.0) {
        return estimate_decay_exponent(eigenvalues).map(|f| f.exponent).unwrap_or(1.0);
    }
    let mut cum = 0.0;
    let points: Vec<(f64, f64)> = eigenvalues
        .iter()
        .zip(multiplicities)
        .map(|(l, m)| {
            cum += m;
            (cum.ln(), l.ln())
        })
        .skip(1)
        .collect();
    if points.len() < 2 {
        return 1.0;
    }
    let s = -ls_slope(&points) / 2.0;
    if s.is_finite() && s > 0.0 {
        s
    } else {
        1.0
    }
}
