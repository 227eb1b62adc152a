//! Null models and alternative distributions on `[0,1]^d` and `S^{d-1}`:
//! samplers, densities, χ² divergences, interpolation-class diagnostics and
//! least-favorable spectral perturbations.

mod cube;
mod sphere;
mod spectral;
mod text;

pub use cube::{GaussianMixture, MarronWand};
pub use sphere::{SphereComponent, SphereKind};
pub use text::builtin_basis;
pub use spectral::{
    interpolation_radius, least_favorable, InterpolationDiagnostic, LeastFavorable, SpectralFamily,
};

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::quadrature::{gauss_gegenbauer, gauss_legendre};
use crate::rng::{stream_rng, StreamRng};
use crate::sample::{Domain, Sample};
use crate::special::ln_sphere_area;
use crate::{Error, Result};

/// The null distribution `P₀` a basis or quadrature refers to.
#[derive(Debug, Clone, PartialEq)]
pub enum NullModel {
    UniformCube(usize),
    /// Uniform on `S^{d-1}`, stored by ambient dimension `d`.
    UniformSphere(usize),
    /// Any other distribution, identified by its text id.
    Other { id: String, domain: Domain },
}

impl NullModel {
    pub fn domain(&self) -> Domain {
        match self {
            NullModel::UniformCube(d) => Domain::Cube(*d),
            NullModel::UniformSphere(d) => Domain::Sphere(*d),
            NullModel::Other { domain, .. } => *domain,
        }
    }

    pub fn id(&self) -> String {
        match self {
            NullModel::UniformCube(d) => format!("uniform-cube:d={d}"),
            NullModel::UniformSphere(d) => format!("uniform-sphere:d={d}"),
            NullModel::Other { id, .. } => id.clone(),
        }
    }

    /// Parses any alternative-spec text; uniform families map to their dedicated variants.
    pub fn parse(id: &str) -> Result<Self> {
        Ok(NullModel::from_spec(&AlternativeSpec::parse(id)?))
    }

    pub fn from_spec(spec: &AlternativeSpec) -> Self {
        match spec {
            AlternativeSpec::UniformCube { d } => NullModel::UniformCube(*d),
            AlternativeSpec::UniformSphere { d } => NullModel::UniformSphere(*d),
            other => NullModel::Other {
                id: other.to_text(),
                domain: other.domain(),
            },
        }
    }

    /// The null as a samplable spec, when it is one of the uniform families.
    pub fn as_spec(&self) -> Result<AlternativeSpec> {
        match self {
            NullModel::UniformCube(d) => Ok(AlternativeSpec::UniformCube { d: *d }),
            NullModel::UniformSphere(d) => Ok(AlternativeSpec::UniformSphere { d: *d }),
            NullModel::Other { id, .. } => AlternativeSpec::parse(id),
        }
    }
}

/// Declarative description of a distribution.
#[derive(Debug, Clone, PartialEq)]
pub enum AlternativeSpec {
    UniformCube { d: usize },
    GaussianMixture(GaussianMixture),
    /// Product of a named Marron–Wand density (rescaled to `[0,1]`) across `d` coordinates.
    MarronWand { density: MarronWand, d: usize },
    UniformSphere { d: usize },
    VonMisesFisher { mu: Vec<f64>, kappa: f64 },
    Watson { mu: Vec<f64>, kappa: f64 },
    SphereMixture { d: usize, components: Vec<SphereComponent> },
    /// Density `1 + Σ a_k φ_k` with respect to the basis null.
    Spectral(SpectralFamily),
    /// `(1 − eps)·uniform + eps·base` on the base's domain.
    Contaminated { base: Box<AlternativeSpec>, eps: f64 },
}

/// Counters reported by the samplers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SamplerStats {
    pub proposals: u64,
    pub accepted: u64,
}

impl SamplerStats {
    pub fn acceptance_rate(&self) -> f64 {
        self.accepted as f64 / self.proposals as f64
    }
}

/// χ² divergence with an error estimate (zero for closed forms).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquare {
    pub value: f64,
    pub error: f64,
}

pub(crate) fn unit_vector(v: &[f64]) -> Result<Vec<f64>> {
    let r: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (r - 1.0).abs() > 1e-8 {
        return Err(Error::invalid("mu", format!("mean direction must have unit norm, got {r}")));
    }
    Ok(v.to_vec())
}

pub(crate) fn uniform_sphere_point(rng: &mut StreamRng, out: &mut [f64]) {
    loop {
        for o in out.iter_mut() {
            *o = rng.sample(StandardNormal);
        }
        let r: f64 = out.iter().map(|x| x * x).sum::<f64>().sqrt();
        if r > 1e-150 {
            out.iter_mut().for_each(|x| *x /= r);
            return;
        }
    }
}

impl AlternativeSpec {
    pub fn domain(&self) -> Domain {
        match self {
            AlternativeSpec::UniformCube { d } => Domain::Cube(*d),
            AlternativeSpec::GaussianMixture(g) => Domain::Cube(g.dim()),
            AlternativeSpec::MarronWand { d, .. } => Domain::Cube(*d),
            AlternativeSpec::UniformSphere { d } => Domain::Sphere(*d),
            AlternativeSpec::VonMisesFisher { mu, .. } | AlternativeSpec::Watson { mu, .. } => Domain::Sphere(mu.len()),
            AlternativeSpec::SphereMixture { d, .. } => Domain::Sphere(*d),
            AlternativeSpec::Spectral(s) => s.basis().domain(),
            AlternativeSpec::Contaminated { base, .. } => base.domain(),
        }
    }

    /// Family tag as used in text ids.
    pub fn family(&self) -> String {
        match self {
            AlternativeSpec::UniformCube { .. } => "uniform-cube".into(),
            AlternativeSpec::GaussianMixture(_) => "gaussian-mixture".into(),
            AlternativeSpec::MarronWand { density, .. } => format!("marron-wand:{}", density.name()),
            AlternativeSpec::UniformSphere { .. } => "uniform-sphere".into(),
            AlternativeSpec::VonMisesFisher { .. } => "vmf".into(),
            AlternativeSpec::Watson { .. } => "watson".into(),
            AlternativeSpec::SphereMixture { .. } => "sphere-mixture".into(),
            AlternativeSpec::Spectral(_) => "spectral".into(),
            AlternativeSpec::Contaminated { base, .. } => base.family(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive_dim = |d: usize, min: usize| {
            if d < min {
                Err(Error::invalid("d", format!("dimension must be at least {min}")))
            } else {
                Ok(())
            }
        };
        match self {
            AlternativeSpec::UniformCube { d } | AlternativeSpec::MarronWand { d, .. } => positive_dim(*d, 1),
            AlternativeSpec::UniformSphere { d } => positive_dim(*d, 2),
            AlternativeSpec::GaussianMixture(g) => g.validate(),
            AlternativeSpec::VonMisesFisher { mu, kappa } | AlternativeSpec::Watson { mu, kappa } => {
                positive_dim(mu.len(), 2)?;
                unit_vector(mu)?;
                if !(*kappa >= 0.0) || !kappa.is_finite() {
                    return Err(Error::invalid("kappa", "concentration must be finite and nonnegative"));
                }
                Ok(())
            }
            AlternativeSpec::SphereMixture { d, components } => sphere::validate_mixture(*d, components),
            AlternativeSpec::Spectral(s) => s.validate(),
            AlternativeSpec::Contaminated { base, eps } => {
                if !(0.0..=1.0).contains(eps) {
                    return Err(Error::invalid("eps", "contamination weight must lie in [0, 1]"));
                }
                if matches!(**base, AlternativeSpec::Spectral(_) | AlternativeSpec::Contaminated { .. }) {
                    return Err(Error::invalid("eps", "contamination applies to cube and sphere families only"));
                }
                base.validate()
            }
        }
    }

    /// `n` i.i.d. draws, deterministic given `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Sample> {
        Ok(self.sample_with_stats(n, seed)?.0)
    }

    /// As [`AlternativeSpec::sample`], also reporting rejection-sampler counters.
    pub fn sample_with_stats(&self, n: usize, seed: u64) -> Result<(Sample, SamplerStats)> {
        self.validate()?;
        let mut rng = stream_rng(seed, 0);
        let domain = self.domain();
        let d = domain.dim();
        let mut data = Vec::with_capacity(n * d);
        let mut stats = SamplerStats::default();
        let mut buf = vec![0.0; d];
        for _ in 0..n {
            self.draw(&mut rng, &mut buf, &mut stats)?;
            stats.accepted += 1;
            data.extend_from_slice(&buf);
        }
        Ok((Sample::new(domain, data)?, stats))
    }

    fn draw(&self, rng: &mut StreamRng, out: &mut [f64], stats: &mut SamplerStats) -> Result<()> {
        match self {
            AlternativeSpec::UniformCube { .. } => {
                stats.proposals += 1;
                for o in out.iter_mut() {
                    *o = rng.random::<f64>();
                }
            }
            AlternativeSpec::UniformSphere { .. } => {
                stats.proposals += 1;
                uniform_sphere_point(rng, out);
            }
            AlternativeSpec::GaussianMixture(g) => g.draw(rng, out, stats),
            AlternativeSpec::MarronWand { density, .. } => {
                for o in out.iter_mut() {
                    *o = density.draw(rng, stats);
                }
            }
            AlternativeSpec::VonMisesFisher { mu, kappa } => sphere::draw_vmf(rng, mu, *kappa, out, stats),
            AlternativeSpec::Watson { mu, kappa } => sphere::draw_watson(rng, mu, *kappa, out, stats),
            AlternativeSpec::SphereMixture { components, .. } => sphere::draw_mixture(rng, components, out, stats),
            AlternativeSpec::Spectral(s) => s.draw(rng, out, stats)?,
            AlternativeSpec::Contaminated { base, eps } => {
                if rng.random::<f64>() < *eps {
                    base.draw(rng, out, stats)?;
                } else {
                    let uniform = match base.domain() {
                        Domain::Cube(d) => AlternativeSpec::UniformCube { d },
                        Domain::Sphere(d) => AlternativeSpec::UniformSphere { d },
                    };
                    uniform.draw(rng, out, stats)?;
                }
            }
        }
        Ok(())
    }

    /// Density with respect to Lebesgue measure on the cube or surface measure on the sphere.
    pub fn density(&self, x: &[f64]) -> Result<f64> {
        self.validate()?;
        let domain = self.domain();
        if x.len() != domain.dim() || !domain.contains(x) {
            return Err(Error::OutOfDomain { index: 0, domain });
        }
        Ok(match self {
            AlternativeSpec::UniformCube { .. } => 1.0,
            AlternativeSpec::UniformSphere { d } => (-ln_sphere_area(*d)).exp(),
            AlternativeSpec::GaussianMixture(g) => g.density(x),
            AlternativeSpec::MarronWand { density, .. } => x.iter().map(|&u| density.density(u)).product(),
            AlternativeSpec::VonMisesFisher { mu, kappa } => sphere::vmf_density(mu, *kappa, x),
            AlternativeSpec::Watson { mu, kappa } => sphere::watson_density(mu, *kappa, x),
            AlternativeSpec::SphereMixture { components, .. } => {
                components.iter().map(|c| c.weight * c.density(x)).sum()
            }
            AlternativeSpec::Spectral(s) => s.density(x)?,
            AlternativeSpec::Contaminated { base, eps } => {
                let uniform = match domain {
                    Domain::Cube(_) => 1.0,
                    Domain::Sphere(d) => (-ln_sphere_area(d)).exp(),
                };
                (1.0 - eps) * uniform + eps * base.density(x)?
            }
        })
    }

    /// `χ²(P, P₀) = ∫ (dP/dP₀)² dP₀ − 1` against a uniform null on the same domain
    /// (or the basis null for the spectral family).
    pub fn chi_square_divergence(&self, null: &NullModel) -> Result<ChiSquare> {
        self.validate()?;
        if let AlternativeSpec::Spectral(s) = self {
            if s.basis().null() != null {
                return Err(Error::NoQuadraturePath(format!("spectral family against {}", null.id())));
            }
            return Ok(ChiSquare {
                value: s.coefficients().iter().map(|a| a * a).sum(),
                error: 0.0,
            });
        }
        let domain = self.domain();
        let matches = matches!(
            (null, domain),
            (NullModel::UniformCube(a), Domain::Cube(b)) | (NullModel::UniformSphere(a), Domain::Sphere(b)) if *a == b
        );
        if !matches {
            return Err(Error::NoQuadraturePath(format!("{} against {}", self.family(), null.id())));
        }
        match self {
            AlternativeSpec::Contaminated { base, eps } => {
                let inner = base.chi_square_divergence(null)?;
                Ok(ChiSquare {
                    value: eps * eps * inner.value,
                    error: eps * eps * inner.error,
                })
            }
            AlternativeSpec::UniformCube { .. } | AlternativeSpec::UniformSphere { .. } => Ok(ChiSquare {
                value: 0.0,
                error: 0.0,
            }),
            AlternativeSpec::GaussianMixture(g) => Ok(ChiSquare {
                value: g.second_moment() - 1.0,
                error: 0.0,
            }),
            AlternativeSpec::MarronWand { density, d } => {
                let one = |n: usize| {
                    let (t, w) = gauss_legendre(n);
                    t.iter()
                        .zip(&w)
                        .map(|(t, w)| {
                            let f = density.density(0.5 * (t + 1.0));
                            0.5 * w * f * f
                        })
                        .sum::<f64>()
                };
                let (coarse, fine) = (one(2000), one(4000));
                let value = fine.powi(*d as i32) - 1.0;
                let error = (coarse.powi(*d as i32) - fine.powi(*d as i32)).abs();
                Ok(ChiSquare { value, error })
            }
            AlternativeSpec::VonMisesFisher { .. } | AlternativeSpec::Watson { .. } => {
                let d = domain.dim();
                let area = ln_sphere_area(d).exp();
                let a = (d as f64 - 3.0) / 2.0;
                let (profile, _) = sphere::axial_profile(self).expect("single-axis family");
                let second = |n: usize| -> Result<f64> {
                    let (t, w) = gauss_gegenbauer(n, a)?;
                    Ok(t.iter()
                        .zip(&w)
                        .map(|(t, w)| {
                            let r = area * profile(*t);
                            w * r * r
                        })
                        .sum())
                };
                let (coarse, fine) = (second(200)?, second(400)?);
                Ok(ChiSquare {
                    value: fine - 1.0,
                    error: (coarse - fine).abs(),
                })
            }
            _ => Err(Error::NoQuadraturePath(self.family())),
        }
    }
}
