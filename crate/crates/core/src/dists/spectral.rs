use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use super::{uniform_sphere_point, AlternativeSpec, NullModel, SamplerStats};
use crate::rng::{stream_rng, StreamRng};
use crate::special::ln_sphere_area;
use crate::spectrum::SpectralBasis;
use crate::{Error, Result};

/// Perturbation `u = Σ a_k φ_k` of the basis null, giving density `1 + u` relative to `P₀`.
#[derive(Debug, Clone)]
pub struct SpectralFamily {
    basis: Arc<SpectralBasis>,
    basis_id: String,
    coefficients: Vec<f64>,
    bound: f64,
}

impl PartialEq for SpectralFamily {
    fn eq(&self, other: &Self) -> bool {
        self.basis_id == other.basis_id && self.coefficients == other.coefficients
    }
}

impl SpectralFamily {
    /// `basis_id` is the reference written when the distribution is serialized.
    pub fn new(basis: Arc<SpectralBasis>, basis_id: impl Into<String>, coefficients: Vec<f64>) -> Result<Self> {
        if !basis.is_degenerate() {
            return Err(Error::NotDegenerate);
        }
        if !matches!(basis.null(), NullModel::UniformCube(_) | NullModel::UniformSphere(_)) {
            return Err(Error::invalid("basis", "spectral perturbations need a uniform null to sample from"));
        }
        if coefficients.len() > basis.len() {
            return Err(Error::ShortSpectrum {
                coefficients: coefficients.len(),
                eigenvalues: basis.len(),
            });
        }
        let sup = basis.sup_norms()?;
        let bound: f64 = coefficients.iter().zip(&sup).map(|(a, s)| a.abs() * s).sum();
        if !(bound < 1.0) {
            return Err(Error::Positivity(bound));
        }
        Ok(SpectralFamily {
            basis,
            basis_id: basis_id.into(),
            coefficients,
            bound,
        })
    }

    pub fn basis(&self) -> &SpectralBasis {
        &self.basis
    }

    pub fn basis_id(&self) -> &str {
        &self.basis_id
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// Rejection envelope `1 + Σ |a_k| ‖φ_k‖_∞`.
    pub fn envelope(&self) -> f64 {
        1.0 + self.bound
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.bound < 1.0 {
            Ok(())
        } else {
            Err(Error::Positivity(self.bound))
        }
    }

    /// `u(x) = Σ a_k φ_k(x)`.
    pub fn perturbation(&self, x: &[f64]) -> Result<f64> {
        if self.coefficients.is_empty() {
            return Ok(0.0);
        }
        let mut phi = vec![0.0; self.coefficients.len()];
        self.basis.features(x, &mut phi)?;
        Ok(phi.iter().zip(&self.coefficients).map(|(p, a)| p * a).sum())
    }

    pub(crate) fn density(&self, x: &[f64]) -> Result<f64> {
        let base = match self.basis.null() {
            NullModel::UniformSphere(d) => (-ln_sphere_area(*d)).exp(),
            _ => 1.0,
        };
        Ok(base * (1.0 + self.perturbation(x)?))
    }

    pub(crate) fn draw(&self, rng: &mut StreamRng, out: &mut [f64], stats: &mut SamplerStats) -> Result<()> {
        let envelope = self.envelope();
        loop {
            stats.proposals += 1;
            match self.basis.null() {
                NullModel::UniformSphere(_) => uniform_sphere_point(rng, out),
                _ => out.iter_mut().for_each(|o| *o = rng.random::<f64>()),
            }
            let ratio = (1.0 + self.perturbation(out)?) / envelope;
            if ratio > 1.0 + 1e-12 || ratio < 0.0 {
                return Err(Error::Envelope(ratio));
            }
            if rng.random::<f64>() < ratio {
                return Ok(());
            }
        }
    }
}

/// Smallest `M` certified by the sufficient condition for `u ∈ F(θ, M)`, in two readings.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolationDiagnostic {
    pub theta: f64,
    /// `M` from `max_K (Σ_{k≤K} a_k²/λ_k)^{2/θ} · Σ_{k≥K} a_k²`.
    pub radius: f64,
    /// `M` from `max_K (Σ_{k≤K} a_k²/λ_k)^{1/θ} · Σ_{k≥K+1} a_k²`.
    pub radius_alternative: f64,
    /// Per-`K` values of the first bound (`M²`), `K = 1..=len`.
    pub trace: Vec<f64>,
    /// Per-`K` values of the second bound (`M²`).
    pub trace_alternative: Vec<f64>,
}

/// Evaluates both readings of the interpolation-class membership bound over every `K ≥ 1`.
pub fn interpolation_radius(a: &[f64], eigenvalues: &[f64], theta: f64) -> Result<InterpolationDiagnostic> {
    if !(theta > 0.0) {
        return Err(Error::invalid("theta", "theta must be positive"));
    }
    if eigenvalues.len() < a.len() {
        return Err(Error::ShortSpectrum {
            coefficients: a.len(),
            eigenvalues: eigenvalues.len(),
        });
    }
    if let Some(i) = eigenvalues[..a.len()].iter().position(|l| !(*l > 0.0)) {
        return Err(Error::NonPositiveEigenvalue {
            index: i + 1,
            value: eigenvalues[i],
        });
    }
    let total: f64 = a.iter().map(|x| x * x).sum();
    let mut head = 0.0;
    let mut before = 0.0;
    let mut trace = Vec::with_capacity(a.len());
    let mut trace_alternative = Vec::with_capacity(a.len());
    for (k, ak) in a.iter().enumerate() {
        head += ak * ak / eigenvalues[k];
        let tail_from_k = (total - before).max(0.0);
        before += ak * ak;
        let tail_after_k = (total - before).max(0.0);
        trace.push(head.powf(2.0 / theta) * tail_from_k);
        trace_alternative.push(head.powf(1.0 / theta) * tail_after_k);
    }
    let max = |v: &[f64]| v.iter().fold(0.0, |m: f64, x| m.max(*x));
    Ok(InterpolationDiagnostic {
        theta,
        radius: max(&trace).sqrt(),
        radius_alternative: max(&trace_alternative).sqrt(),
        trace,
        trace_alternative,
    })
}

/// Least-favorable constructions from the lower-bound arguments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LeastFavorable {
    /// `K_n = ⌊C Δ^{-(θ+1)/(2s)}⌋` frequencies with amplitude `√(Δ/K_n)` and random signs.
    MultiFrequency { c: f64 },
    /// Frequency `k_n = ⌊C n^{1/(4s)}⌋` alone, with amplitude `√Δ`.
    SingleFrequency { c: f64 },
}

/// Spectral alternative with `χ² = Δ` built on `basis` (frequencies are 1-based indices into it).
pub fn least_favorable(
    basis: Arc<SpectralBasis>,
    n: usize,
    s: f64,
    theta: f64,
    delta: f64,
    seed: u64,
    construction: LeastFavorable,
) -> Result<AlternativeSpec> {
    if !(s > 0.0) || !(theta >= 0.0) || !(delta >= 0.0) {
        return Err(Error::invalid("s", "need s > 0, theta >= 0, delta >= 0"));
    }
    let coefficients = match construction {
        LeastFavorable::MultiFrequency { c } => {
            if delta == 0.0 {
                Vec::new()
            } else {
                let k = (c * delta.powf(-(theta + 1.0) / (2.0 * s)) + 1e-9).floor();
                if !(k >= 1.0) || k > basis.len() as f64 {
                    return Err(Error::invalid(
                        "delta",
                        alloc::format!("construction needs {k} frequencies, basis has {}", basis.len()),
                    ));
                }
                let k = k as usize;
                let amp = (delta / k as f64).sqrt();
                let mut rng = stream_rng(seed, 0);
                (0..k).map(|_| if rng.random::<bool>() { amp } else { -amp }).collect()
            }
        }
        LeastFavorable::SingleFrequency { c } => {
            if n == 0 {
                return Err(Error::invalid("n", "sample size must be positive"));
            }
            let k = (c * (n as f64).powf(1.0 / (4.0 * s)) + 1e-9).floor();
            if !(k >= 1.0) || k > basis.len() as f64 {
                return Err(Error::invalid(
                    "n",
                    alloc::format!("construction needs frequency {k}, basis has {}", basis.len()),
                ));
            }
            let mut a = vec![0.0; k as usize];
            a[k as usize - 1] = delta.sqrt();
            a
        }
    };
    let id = String::from(basis.kernel_id());
    Ok(AlternativeSpec::Spectral(SpectralFamily::new(basis, id, coefficients)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::{PI, SQRT_2};

    fn cosine(k: usize) -> Arc<SpectralBasis> {
        Arc::new(SpectralBasis::cosine_reference(k).unwrap())
    }

    fn family(a: &[f64]) -> SpectralFamily {
        SpectralFamily::new(cosine(a.len().max(1)), "cosine", a.to_vec()).unwrap()
    }

    #[test]
    fn parseval() {
        let spec = AlternativeSpec::Spectral(family(&[0.3]));
        let null = NullModel::UniformCube(1);
        assert_eq!(spec.chi_square_divergence(&null).unwrap().value, 0.09);
        let spec = AlternativeSpec::Spectral(family(&[0.3, 0.4]));
        let chi = spec.chi_square_divergence(&null).unwrap().value;
        assert!((chi - 0.25).abs() < 1e-15);
        let (t, w) = crate::quadrature::gauss_legendre(200);
        let quad: f64 = t
            .iter()
            .zip(&w)
            .map(|(t, w)| {
                let d = spec.density(&[0.5 * (t + 1.0)]).unwrap();
                0.5 * w * d * d
            })
            .sum::<f64>()
            - 1.0;
        assert!((quad - 0.25).abs() < 1e-6);
    }

    #[test]
    fn acceptance_rate_matches_envelope() {
        let f = family(&[0.3]);
        assert!((f.envelope() - (1.0 + 0.3 * SQRT_2)).abs() < 1e-15);
        let spec = AlternativeSpec::Spectral(f);
        let (_, stats) = spec.sample_with_stats(70_210, 5).unwrap();
        let rate = stats.acceptance_rate();
        assert!((rate - 1.0 / (1.0 + 0.3 * SQRT_2)).abs() < 0.01, "{rate}");
    }

    #[test]
    fn moment_identity() {
        let a = [0.2, -0.15, 0.1];
        let spec = AlternativeSpec::Spectral(family(&a));
        let n = 100_000;
        let s = spec.sample(n, 12).unwrap();
        for (k, ak) in a.iter().enumerate() {
            let mean: f64 = s
                .points()
                .map(|x| SQRT_2 * ((k + 1) as f64 * PI * x[0]).cos())
                .sum::<f64>()
                / n as f64;
            assert!((mean - ak).abs() < 4.0 / (n as f64).sqrt() * SQRT_2);
        }
    }

    #[test]
    fn positivity_is_enforced() {
        assert_eq!(
            SpectralFamily::new(cosine(1), "cosine", vec![0.8]).unwrap_err(),
            Error::Positivity(0.8 * SQRT_2)
        );
    }

    #[test]
    fn interpolation_single_term() {
        let d = interpolation_radius(&[1.0], &[0.101321], 1.0).unwrap();
        assert!((d.trace[0] - 97.41).abs() < 0.01);
        assert!((d.radius - 9.870).abs() < 1e-3);
        let zero = interpolation_radius(&[0.0, 0.0], &[0.5, 0.1], 2.0).unwrap();
        assert_eq!((zero.radius, zero.radius_alternative), (0.0, 0.0));
    }

    #[test]
    fn interpolation_rescaling() {
        let lambdas: Vec<f64> = (1..=6).map(|k| 1.0 / (k as f64 * PI).powi(2)).collect();
        let a = [0.3, -0.1, 0.05, 0.2, 0.01, 0.07];
        for theta in [0.5, 1.0, 3.0] {
            let base = interpolation_radius(&a, &lambdas, theta).unwrap().radius;
            for c in [0.5, 2.0] {
                let scaled: Vec<f64> = a.iter().map(|x| c * x).collect();
                // Brute force over K, independent of the implementation.
                let m2 = (1..=6)
                    .map(|k| {
                        let head: f64 = (0..k).map(|j| scaled[j] * scaled[j] / lambdas[j]).sum();
                        let tail: f64 = (k - 1..6).map(|j| scaled[j] * scaled[j]).sum();
                        head.powf(2.0 / theta) * tail
                    })
                    .fold(0.0, f64::max);
                let got = interpolation_radius(&scaled, &lambdas, theta).unwrap().radius;
                assert!((got - m2.sqrt()).abs() < 1e-12 * got);
                assert!((got / base - c.powf(1.0 + 2.0 / theta)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn interpolation_errors() {
        assert!(matches!(
            interpolation_radius(&[1.0, 1.0], &[1.0], 1.0),
            Err(Error::ShortSpectrum { .. })
        ));
        assert!(interpolation_radius(&[1.0], &[1.0], 0.0).is_err());
    }

    #[test]
    fn least_favorable_examples() {
        let b = cosine(64);
        let spec = least_favorable(b.clone(), 1000, 1.0, 0.0, 0.01, 3, LeastFavorable::MultiFrequency { c: 1.0 }).unwrap();
        let AlternativeSpec::Spectral(f) = &spec else { panic!() };
        assert_eq!(f.coefficients().len(), 10);
        assert!(f.coefficients().iter().all(|a| (a.abs() - 0.001f64.sqrt()).abs() < 1e-15));
        let chi = spec.chi_square_divergence(&NullModel::UniformCube(1)).unwrap().value;
        assert!((chi - 0.01).abs() < 1e-15);
        let single =
            least_favorable(b.clone(), 10_000, 1.0, 0.0, 0.04, 3, LeastFavorable::SingleFrequency { c: 1.0 }).unwrap();
        let AlternativeSpec::Spectral(f) = &single else { panic!() };
        assert_eq!(f.coefficients().len(), 10);
        assert_eq!(f.coefficients()[9], 0.2);
        assert!(matches!(
            least_favorable(b, 1000, 1.0, 0.0, 0.9, 3, LeastFavorable::SingleFrequency { c: 1.0 }),
            Err(Error::Positivity(_))
        ));
    }
}
