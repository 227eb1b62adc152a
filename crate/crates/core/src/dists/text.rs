//! `family:key=value,...` text form of [`AlternativeSpec`]. Lists use `;`.
//!
//! ```text
//! uniform-cube:d=2
//! uniform-sphere:d=3
//! gaussian-mixture:d=5,seed=1[,components=5][,scale=0.05]
//! gaussian-mixture:d=2,scale=0.05,weights=0.5;0.5,means=0.3;0.3;0.7;0.6
//! marron-wand:skewed-unimodal,d=5
//! vmf:d=3,kappa=1[,mu=0;0;1]
//! watson:d=3,kappa=2
//! sphere-mixture:d=3,components=0.5*vmf(4;0;0;1)+0.5*watson(2;1;0;0)
//! sphere-mixture:d=3,kind=watson,count=5,kappa=4,seed=2
//! spectral:basis=cosine,a=0.3;0.4
//! marron-wand:asymmetric-claw,d=5,eps=0.3
//! ```
//!
//! A trailing `eps=w` on any cube or sphere family mixes it with the uniform
//! distribution: `(1 − w)·uniform + w·family`.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use super::{AlternativeSpec, GaussianMixture, MarronWand, SpectralFamily, SphereComponent, SphereKind};
use crate::spectrum::SpectralBasis;
use crate::{Error, Result};

struct Fields<'a> {
    input: &'a str,
    positional: Vec<&'a str>,
    pairs: Vec<(&'a str, &'a str)>,
}

impl<'a> Fields<'a> {
    fn get(&self, key: &str) -> Option<&'a str> {
        self.pairs.iter().find(|(k, _)| *k == key).map(|(_, v)| *v)
    }

    fn num<T: core::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| v.parse::<T>().map_err(|_| Error::parse(self.input, format!("bad value for `{key}`"))))
            .transpose()
    }

    fn required<T: core::str::FromStr>(&self, key: &str) -> Result<T> {
        self.num(key)?
            .ok_or_else(|| Error::parse(self.input, format!("missing field `{key}`")))
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.get(key).map(|v| parse_list(self.input, v)).transpose()
    }
}

fn parse_list(input: &str, v: &str) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(';')
        .map(|x| x.trim().parse::<f64>().map_err(|_| Error::parse(input, format!("bad number `{x}`"))))
        .collect()
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

fn north(d: usize) -> Vec<f64> {
    let mut mu = vec![0.0; d];
    if d > 0 {
        mu[d - 1] = 1.0;
    }
    mu
}

fn direction(f: &Fields<'_>) -> Result<Vec<f64>> {
    let d: Option<usize> = f.num("d")?;
    match (f.list("mu")?, d) {
        (Some(mu), Some(d)) if mu.len() != d => Err(Error::parse(f.input, "`mu` length differs from `d`")),
        (Some(mu), _) => Ok(mu),
        (None, Some(d)) => Ok(north(d)),
        (None, None) => Err(Error::parse(f.input, "need `d` or `mu`")),
    }
}

fn parse_component(input: &str, text: &str, d: usize) -> Result<SphereComponent> {
    let bad = || Error::parse(input, format!("bad mixture component `{text}`"));
    let (weight, rest) = text.split_once('*').ok_or_else(bad)?;
    let (kind, args) = rest.split_once('(').ok_or_else(bad)?;
    let args = args.strip_suffix(')').ok_or_else(bad)?;
    let kind = match kind.trim() {
        "vmf" => SphereKind::VonMisesFisher,
        "watson" => SphereKind::Watson,
        _ => return Err(bad()),
    };
    let values = parse_list(input, args)?;
    let (kappa, mu) = values.split_first().ok_or_else(bad)?;
    Ok(SphereComponent {
        weight: weight.trim().parse().map_err(|_| bad())?,
        kind,
        kappa: *kappa,
        mu: if mu.is_empty() { north(d) } else { mu.to_vec() },
    })
}

/// Resolves the built-in `cosine` reference basis, sized to the coefficient list.
pub fn builtin_basis(id: &str, coefficients: usize) -> Result<SpectralBasis> {
    match id {
        "cosine" => SpectralBasis::cosine_reference(coefficients.max(1)),
        other => Err(Error::parse(other, "unknown basis reference")),
    }
}

impl AlternativeSpec {
    /// Parses the text form, resolving spectral basis references with the built-in table.
    pub fn parse(text: &str) -> Result<Self> {
        AlternativeSpec::parse_with(text, &|id, k| builtin_basis(id, k).map(Arc::new))
    }

    /// Parses the text form; `resolve(id, coefficient count)` supplies spectral bases.
    pub fn parse_with(text: &str, resolve: &dyn Fn(&str, usize) -> Result<Arc<SpectralBasis>>) -> Result<Self> {
        let text = text.trim();
        let (family, rest) = text.split_once(':').unwrap_or((text, ""));
        let mut fields = Fields {
            input: text,
            positional: Vec::new(),
            pairs: Vec::new(),
        };
        for token in rest.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            match token.split_once('=') {
                Some((k, v)) => {
                    let k = k.trim();
                    if fields.get(k).is_some() {
                        return Err(Error::parse(text, format!("field `{k}` given twice")));
                    }
                    fields.pairs.push((k, v.trim()));
                }
                None => fields.positional.push(token),
            }
        }
        let f = &fields;
        let spec = match family {
            "uniform-cube" => AlternativeSpec::UniformCube {
                d: f.num("d")?.unwrap_or(1),
            },
            "uniform-sphere" => AlternativeSpec::UniformSphere { d: f.required("d")? },
            "gaussian-mixture" => {
                let d: usize = f.required("d")?;
                let scale = f.num("scale")?.unwrap_or(0.05);
                match f.list("means")? {
                    Some(means) => {
                        let count = means.len() / d.max(1);
                        let weights = f.list("weights")?.unwrap_or_else(|| vec![1.0 / count as f64; count]);
                        AlternativeSpec::GaussianMixture(GaussianMixture::new(d, means, weights, scale)?)
                    }
                    None => AlternativeSpec::GaussianMixture(GaussianMixture::random(
                        d,
                        f.num("components")?.unwrap_or(5),
                        scale,
                        f.required("seed")?,
                    )?),
                }
            }
            "marron-wand" => {
                let name = f
                    .get("name")
                    .or(f.positional.first().copied())
                    .ok_or_else(|| Error::parse(text, "missing density name"))?;
                AlternativeSpec::MarronWand {
                    density: MarronWand::parse(name)?,
                    d: f.num("d")?.unwrap_or(1),
                }
            }
            "vmf" => AlternativeSpec::VonMisesFisher {
                mu: direction(f)?,
                kappa: f.required("kappa")?,
            },
            "watson" => AlternativeSpec::Watson {
                mu: direction(f)?,
                kappa: f.required("kappa")?,
            },
            "sphere-mixture" => {
                let d: usize = f.required("d")?;
                match f.get("components") {
                    Some(list) => AlternativeSpec::SphereMixture {
                        d,
                        components: list
                            .split('+')
                            .map(|c| parse_component(text, c.trim(), d))
                            .collect::<Result<_>>()?,
                    },
                    None => {
                        let kind = match f.get("kind").unwrap_or("vmf") {
                            "vmf" => SphereKind::VonMisesFisher,
                            "watson" => SphereKind::Watson,
                            other => return Err(Error::parse(other, "mixture kind must be vmf or watson")),
                        };
                        AlternativeSpec::sphere_mixture_random(
                            kind,
                            d,
                            f.num("count")?.unwrap_or(5),
                            f.required("kappa")?,
                            f.required("seed")?,
                        )?
                    }
                }
            }
            "spectral" => {
                let basis_id = f.get("basis").ok_or_else(|| Error::parse(text, "missing field `basis`"))?;
                let a = f.list("a")?.unwrap_or_default();
                let basis = resolve(basis_id, a.len())?;
                AlternativeSpec::Spectral(SpectralFamily::new(basis, basis_id, a)?)
            }
            other => return Err(Error::parse(other, "unknown distribution family")),
        };
        let spec = match f.num::<f64>("eps")? {
            Some(eps) => AlternativeSpec::Contaminated {
                base: alloc::boxed::Box::new(spec),
                eps,
            },
            None => spec,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Canonical text form; parsing it reproduces this value exactly.
    pub fn to_text(&self) -> String {
        match self {
            AlternativeSpec::UniformCube { d } => format!("uniform-cube:d={d}"),
            AlternativeSpec::UniformSphere { d } => format!("uniform-sphere:d={d}"),
            AlternativeSpec::GaussianMixture(g) => format!(
                "gaussian-mixture:d={},scale={},weights={},means={}",
                g.dim(),
                g.scale(),
                join(g.weights()),
                join(g.means())
            ),
            AlternativeSpec::MarronWand { density, d } => format!("marron-wand:{},d={d}", density.name()),
            AlternativeSpec::VonMisesFisher { mu, kappa } => {
                format!("vmf:d={},kappa={kappa},mu={}", mu.len(), join(mu))
            }
            AlternativeSpec::Watson { mu, kappa } => {
                format!("watson:d={},kappa={kappa},mu={}", mu.len(), join(mu))
            }
            AlternativeSpec::SphereMixture { d, components } => {
                let parts: Vec<String> = components
                    .iter()
                    .map(|c| {
                        let mut args = vec![c.kappa];
                        args.extend_from_slice(&c.mu);
                        format!("{}*{}({})", c.weight, c.kind.name(), join(&args))
                    })
                    .collect();
                format!("sphere-mixture:d={d},components={}", parts.join("+"))
            }
            AlternativeSpec::Spectral(s) => {
                format!("spectral:basis={},a={}", s.basis_id(), join(s.coefficients()))
            }
            AlternativeSpec::Contaminated { base, eps } => format!("{},eps={eps}", base.to_text()),
        }
    }
}

impl core::fmt::Display for AlternativeSpec {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(&self.to_text())
    }
}
