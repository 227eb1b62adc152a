use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};

use super::{uniform_sphere_point, unit_vector, AlternativeSpec, SamplerStats};
use crate::rng::{stream_rng, StreamRng};
use crate::special::{ln_bessel_i, ln_kummer_m, ln_sphere_area};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SphereKind {
    VonMisesFisher,
    Watson,
}

impl SphereKind {
    pub fn name(&self) -> &'static str {
        match self {
            SphereKind::VonMisesFisher => "vmf",
            SphereKind::Watson => "watson",
        }
    }
}

/// One weighted vMF or Watson component of a spherical mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereComponent {
    pub weight: f64,
    pub kind: SphereKind,
    pub kappa: f64,
    pub mu: Vec<f64>,
}

impl SphereComponent {
    pub(crate) fn density(&self, x: &[f64]) -> f64 {
        match self.kind {
            SphereKind::VonMisesFisher => vmf_density(&self.mu, self.kappa, x),
            SphereKind::Watson => watson_density(&self.mu, self.kappa, x),
        }
    }
}

pub(crate) fn validate_mixture(d: usize, components: &[SphereComponent]) -> Result<()> {
    if d < 2 || components.is_empty() {
        return Err(Error::invalid("components", "need d >= 2 and at least one component"));
    }
    let total: f64 = components.iter().map(|c| c.weight).sum();
    if components.iter().any(|c| !(c.weight > 0.0)) || (total - 1.0).abs() > 1e-12 {
        return Err(Error::invalid("weights", "mixture weights must be positive and sum to 1"));
    }
    for c in components {
        if c.mu.len() != d {
            return Err(Error::invalid("mu", "component direction has the wrong dimension"));
        }
        unit_vector(&c.mu)?;
        if !(c.kappa >= 0.0) || !c.kappa.is_finite() {
            return Err(Error::invalid("kappa", "concentration must be finite and nonnegative"));
        }
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `ln C_vMF(κ) = (d/2 − 1) ln κ − (d/2) ln 2π − ln I_{d/2−1}(κ)`.
pub(crate) fn ln_vmf_const(d: usize, kappa: f64) -> f64 {
    if kappa == 0.0 {
        return -ln_sphere_area(d);
    }
    let h = 0.5 * d as f64;
    (h - 1.0) * kappa.ln() - h * (2.0 * PI).ln() - ln_bessel_i(h - 1.0, kappa)
}

/// `ln C_W(κ) = −ln |S^{d−1}| − ln M(½, d/2, κ)`.
pub(crate) fn ln_watson_const(d: usize, kappa: f64) -> f64 {
    -ln_sphere_area(d) - ln_kummer_m(0.5, 0.5 * d as f64, kappa)
}

pub(crate) fn vmf_density(mu: &[f64], kappa: f64, x: &[f64]) -> f64 {
    (ln_vmf_const(mu.len(), kappa) + kappa * dot(mu, x)).exp()
}

pub(crate) fn watson_density(mu: &[f64], kappa: f64, x: &[f64]) -> f64 {
    let t = dot(mu, x);
    (ln_watson_const(mu.len(), kappa) + kappa * t * t).exp()
}

/// Density of a single-axis family as a function of `t = μᵀx`, and its axis.
pub(crate) fn axial_profile(spec: &AlternativeSpec) -> Option<(Box<dyn Fn(f64) -> f64>, Vec<f64>)> {
    match spec {
        AlternativeSpec::VonMisesFisher { mu, kappa } => {
            let (c, k) = (ln_vmf_const(mu.len(), *kappa), *kappa);
            Some((Box::new(move |t| (c + k * t).exp()), mu.clone()))
        }
        AlternativeSpec::Watson { mu, kappa } => {
            let (c, k) = (ln_watson_const(mu.len(), *kappa), *kappa);
            Some((Box::new(move |t| (c + k * t * t).exp()), mu.clone()))
        }
        _ => None,
    }
}

/// Tangent-normal decomposition: `x = wμ + √(1−w²) v`, `v` uniform on the
/// unit sphere of the orthogonal complement of `μ`. The radial coordinate `w`
/// comes from Wood's rejection sampler.
pub(crate) fn draw_vmf(rng: &mut StreamRng, mu: &[f64], kappa: f64, out: &mut [f64], stats: &mut SamplerStats) {
    let d = mu.len();
    if kappa == 0.0 {
        stats.proposals += 1;
        uniform_sphere_point(rng, out);
        return;
    }
    let m = (d - 1) as f64;
    let b = m / (2.0 * kappa + (4.0 * kappa * kappa + m * m).sqrt());
    let x0 = (1.0 - b) / (1.0 + b);
    let c = kappa * x0 + m * (1.0 - x0 * x0).ln();
    let beta = Beta::new(0.5 * m, 0.5 * m).expect("positive shape");
    let w = loop {
        stats.proposals += 1;
        let z: f64 = beta.sample(rng);
        let w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z);
        let u: f64 = rng.random();
        if kappa * w + m * (1.0 - x0 * w).ln() - c >= u.ln() {
            break w;
        }
    };
    let v = loop {
        let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let proj = dot(&v, mu);
        v.iter_mut().zip(mu).for_each(|(a, m)| *a -= proj * m);
        let r = dot(&v, &v).sqrt();
        if r > 1e-12 {
            v.iter_mut().for_each(|a| *a /= r);
            break v;
        }
    };
    let s = (1.0 - w * w).max(0.0).sqrt();
    for ((o, m), v) in out.iter_mut().zip(mu).zip(&v) {
        *o = w * m + s * v;
    }
    let r = dot(out, out).sqrt();
    out.iter_mut().for_each(|a| *a /= r);
}

/// Rejection from the symmetric proposal `½ vMF(μ,κ) + ½ vMF(−μ,κ)`, whose
/// density is proportional to `cosh(κt)`; the acceptance probability
/// `exp(κt² − κ|t|) / (1 + exp(−2κ|t|))` is the target-to-proposal ratio over its bound.
pub(crate) fn draw_watson(rng: &mut StreamRng, mu: &[f64], kappa: f64, out: &mut [f64], stats: &mut SamplerStats) {
    if kappa == 0.0 {
        stats.proposals += 1;
        uniform_sphere_point(rng, out);
        return;
    }
    let mut inner = SamplerStats::default();
    loop {
        stats.proposals += 1;
        draw_vmf(rng, mu, kappa, out, &mut inner);
        if rng.random::<bool>() {
            out.iter_mut().for_each(|a| *a = -*a);
        }
        let t = dot(mu, out).abs();
        let accept = (kappa * t * t - kappa * t).exp() / (1.0 + (-2.0 * kappa * t).exp());
        if rng.random::<f64>() < accept {
            return;
        }
    }
}

pub(crate) fn draw_mixture(
    rng: &mut StreamRng,
    components: &[SphereComponent],
    out: &mut [f64],
    stats: &mut SamplerStats,
) {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut chosen = &components[components.len() - 1];
    for c in components {
        acc += c.weight;
        if u < acc {
            chosen = c;
            break;
        }
    }
    match chosen.kind {
        SphereKind::VonMisesFisher => draw_vmf(rng, &chosen.mu, chosen.kappa, out, stats),
        SphereKind::Watson => draw_watson(rng, &chosen.mu, chosen.kappa, out, stats),
    }
}

impl AlternativeSpec {
    /// Equally weighted mixture of `count` components of one kind with common
    /// concentration and uniformly random directions.
    pub fn sphere_mixture_random(kind: SphereKind, d: usize, count: usize, kappa: f64, seed: u64) -> Result<Self> {
        if d < 2 || count == 0 {
            return Err(Error::invalid("count", "need d >= 2 and at least one component"));
        }
        let mut rng = stream_rng(seed, 0);
        let components = (0..count)
            .map(|_| {
                let mut mu = vec![0.0; d];
                uniform_sphere_point(&mut rng, &mut mu);
                SphereComponent {
                    weight: 1.0 / count as f64,
                    kind,
                    kappa,
                    mu,
                }
            })
            .collect::<Vec<_>>();
        let spec = AlternativeSpec::SphereMixture { d, components };
        spec.validate()?;
        Ok(spec)
    }
}
