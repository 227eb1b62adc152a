use alloc::vec::Vec;
use core::f64::consts::PI;
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::StandardNormal;

use super::SamplerStats;
use crate::rng::{stream_rng, StreamRng};
use crate::special::normal_cdf;
use crate::{Error, Result};

fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

fn pick(rng: &mut StreamRng, weights: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// Isotropic Gaussian mixture truncated to `[0,1]^d` and renormalized.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    d: usize,
    /// Component means, row-major `components × d`.
    means: Vec<f64>,
    weights: Vec<f64>,
    scale: f64,
}

impl GaussianMixture {
    pub fn new(d: usize, means: Vec<f64>, weights: Vec<f64>, scale: f64) -> Result<Self> {
        let g = GaussianMixture { d, means, weights, scale };
        g.validate()?;
        Ok(g)
    }

    /// `components` equally weighted components with means uniform on `[0.2, 0.8]^d`.
    pub fn random(d: usize, components: usize, scale: f64, seed: u64) -> Result<Self> {
        let mut rng = stream_rng(seed, 0);
        let means = (0..d * components).map(|_| 0.2 + 0.6 * rng.random::<f64>()).collect();
        GaussianMixture::new(d, means, alloc::vec![1.0 / components as f64; components], scale)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.d == 0 || self.weights.is_empty() || self.means.len() != self.d * self.weights.len() {
            return Err(Error::invalid("means", "need one d-dimensional mean per weight"));
        }
        if self.weights.iter().any(|w| !(*w > 0.0)) || (self.weights.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("weights", "mixture weights must be positive and sum to 1"));
        }
        if !(self.scale > 0.0) || !self.scale.is_finite() {
            return Err(Error::invalid("scale", "scale must be positive"));
        }
        if self.means.iter().any(|m| !m.is_finite()) {
            return Err(Error::invalid("means", "means must be finite"));
        }
        Ok(())
    }

    fn mean(&self, c: usize) -> &[f64] {
        &self.means[c * self.d..(c + 1) * self.d]
    }

    fn normalizer(&self) -> f64 {
        let s = self.scale;
        (0..self.weights.len())
            .map(|c| {
                self.weights[c]
                    * self
                        .mean(c)
                        .iter()
                        .map(|m| normal_cdf((1.0 - m) / s) - normal_cdf(-m / s))
                        .product::<f64>()
            })
            .sum()
    }

    pub(crate) fn density(&self, x: &[f64]) -> f64 {
        let s = self.scale;
        let raw: f64 = (0..self.weights.len())
            .map(|c| {
                self.weights[c]
                    * self
                        .mean(c)
                        .iter()
                        .zip(x)
                        .map(|(m, x)| normal_pdf((x - m) / s) / s)
                        .product::<f64>()
            })
            .sum();
        raw / self.normalizer()
    }

    /// `∫_{[0,1]^d} p²`, in closed form from products of Gaussian overlaps.
    pub(crate) fn second_moment(&self) -> f64 {
        let s = self.scale;
        let s2 = s * 2f64.sqrt();
        let sh = s / 2f64.sqrt();
        let overlap = |a: f64, b: f64| {
            let c = 0.5 * (a + b);
            normal_pdf((a - b) / s2) / s2 * (normal_cdf((1.0 - c) / sh) - normal_cdf(-c / sh))
        };
        let k = self.weights.len();
        let mut total = 0.0;
        for a in 0..k {
            for b in 0..k {
                let prod: f64 = self.mean(a).iter().zip(self.mean(b)).map(|(x, y)| overlap(*x, *y)).product();
                total += self.weights[a] * self.weights[b] * prod;
            }
        }
        let z = self.normalizer();
        total / (z * z)
    }

    pub(crate) fn draw(&self, rng: &mut StreamRng, out: &mut [f64], stats: &mut SamplerStats) {
        loop {
            stats.proposals += 1;
            let c = pick(rng, &self.weights);
            let mut inside = true;
            for (o, m) in out.iter_mut().zip(self.mean(c)) {
                let z: f64 = rng.sample(StandardNormal);
                *o = m + self.scale * z;
                inside &= (0.0..=1.0).contains(o);
            }
            if inside {
                return;
            }
        }
    }
}

/// Named Marron–Wand normal-mixture densities, mapped affinely from
/// `[μ − 3σ, μ + 3σ]` (mixture mean and standard deviation) onto `[0,1]` and
/// renormalized exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarronWand {
    SkewedUnimodal,
    AsymmetricClaw,
    SmoothComb,
}

impl MarronWand {
    pub const ALL: [MarronWand; 3] = [MarronWand::SkewedUnimodal, MarronWand::AsymmetricClaw, MarronWand::SmoothComb];

    pub fn name(&self) -> &'static str {
        match self {
            MarronWand::SkewedUnimodal => "skewed-unimodal",
            MarronWand::AsymmetricClaw => "asymmetric-claw",
            MarronWand::SmoothComb => "smooth-comb",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        MarronWand::ALL
            .into_iter()
            .find(|m| m.name() == name)
            .ok_or_else(|| Error::parse(name, "unknown Marron–Wand density"))
    }

    /// `(weight, mean, standard deviation)` of each normal component on the original scale.
    pub fn components(&self) -> Vec<(f64, f64, f64)> {
        match self {
            MarronWand::SkewedUnimodal => alloc::vec![
                (0.2, 0.0, 1.0),
                (0.2, 0.5, 2.0 / 3.0),
                (0.6, 13.0 / 12.0, 5.0 / 9.0)
            ],
            MarronWand::AsymmetricClaw => {
                let mut c = alloc::vec![(0.5, 0.0, 1.0)];
                for l in -2i32..=2 {
                    c.push((2f64.powi(1 - l) / 31.0, l as f64 + 0.5, 2f64.powi(-l) / 10.0));
                }
                c
            }
            MarronWand::SmoothComb => (0..=5)
                .map(|l| {
                    let p = 2f64.powi(-l);
                    (2f64.powi(5 - l) / 63.0, (65.0 - 96.0 * p) / 21.0, 32.0 / 63.0 * p)
                })
                .collect(),
        }
    }

    /// Left end and length of the mapped interval.
    fn window(&self) -> (f64, f64) {
        let c = self.components();
        let mean: f64 = c.iter().map(|(w, m, _)| w * m).sum();
        let second: f64 = c.iter().map(|(w, m, s)| w * (s * s + m * m)).sum();
        let sd = (second - mean * mean).sqrt();
        (mean - 3.0 * sd, 6.0 * sd)
    }

    /// Density on `[0,1]`.
    pub fn density(&self, u: f64) -> f64 {
        let (a, len) = self.window();
        let c = self.components();
        let y = a + len * u;
        let raw: f64 = c.iter().map(|(w, m, s)| w * normal_pdf((y - m) / s) / s).sum();
        let mass: f64 = c
            .iter()
            .map(|(w, m, s)| w * (normal_cdf((a + len - m) / s) - normal_cdf((a - m) / s)))
            .sum();
        len * raw / mass
    }

    pub(crate) fn draw(&self, rng: &mut StreamRng, stats: &mut SamplerStats) -> f64 {
        let (a, len) = self.window();
        let c = self.components();
        let weights: Vec<f64> = c.iter().map(|x| x.0).collect();
        loop {
            stats.proposals += 1;
            let (_, m, s) = c[pick(rng, &weights)];
            let z: f64 = rng.sample(StandardNormal);
            let u = (m + s * z - a) / len;
            if (0.0..=1.0).contains(&u) {
                return u;
            }
        }
    }
}

impl core::fmt::Display for MarronWand {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::gauss_legendre;

    fn integrate01(f: impl Fn(f64) -> f64, n: usize) -> f64 {
        let (t, w) = gauss_legendre(n);
        t.iter().zip(&w).map(|(t, w)| 0.5 * w * f(0.5 * (t + 1.0))).sum()
    }

    #[test]
    fn marron_wand_weights_sum_to_one() {
        for m in MarronWand::ALL {
            let total: f64 = m.components().iter().map(|c| c.0).sum();
            assert!((total - 1.0).abs() < 1e-14, "{m}");
        }
    }

    #[test]
    fn marron_wand_densities_integrate_to_one() {
        for m in MarronWand::ALL {
            let v = integrate01(|u| m.density(u), 3000);
            assert!((v - 1.0).abs() < 1e-6, "{m}: {v}");
        }
    }

    #[test]
    fn marron_wand_sampler_matches_density_moments() {
        for m in MarronWand::ALL {
            let mut rng = stream_rng(5, 1);
            let mut stats = SamplerStats::default();
            let n = 40_000;
            let draws: Vec<f64> = (0..n).map(|_| m.draw(&mut rng, &mut stats)).collect();
            for j in 1..=3 {
                let f = |u: f64| (j as f64 * PI * u).cos();
                let exact = integrate01(|u| f(u) * m.density(u), 3000);
                let vals: Vec<f64> = draws.iter().map(|&u| f(u)).collect();
                let mean = vals.iter().sum::<f64>() / n as f64;
                let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
                let se = (var / n as f64).sqrt();
                assert!((mean - exact).abs() < 4.0 * se, "{m} j={j}: {mean} vs {exact}");
            }
        }
    }

    #[test]
    fn single_component_mixture_is_gaussian() {
        let g = GaussianMixture::new(2, alloc::vec![0.5, 0.4], alloc::vec![1.0], 0.05).unwrap();
        let mut rng = stream_rng(1, 0);
        let mut stats = SamplerStats::default();
        let n = 5000;
        let mut sum = [0.0; 2];
        let mut sq = [0.0; 2];
        let mut buf = [0.0; 2];
        for _ in 0..n {
            g.draw(&mut rng, &mut buf, &mut stats);
            for j in 0..2 {
                sum[j] += buf[j];
                sq[j] += buf[j] * buf[j];
            }
        }
        for (j, target) in [0.5, 0.4].iter().enumerate() {
            let mean = sum[j] / n as f64;
            let var = sq[j] / n as f64 - mean * mean;
            assert!((mean - target).abs() < 3.0 * 0.05 / (n as f64).sqrt());
            let se_var = 0.0025 * (2.0 / n as f64).sqrt();
            assert!((var - 0.0025).abs() < 3.0 * se_var);
        }
    }

    #[test]
    fn mixture_second_moment_matches_quadrature() {
        let g = GaussianMixture::random(1, 5, 0.05, 3).unwrap();
        let direct = integrate01(|u| g.density(&[u]).powi(2), 4000);
        assert!((g.second_moment() - direct).abs() < 1e-9 * direct);
        let mass = integrate01(|u| g.density(&[u]), 4000);
        assert!((mass - 1.0).abs() < 1e-10);
    }
}
