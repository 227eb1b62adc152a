use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use super::{Evaluator, SpectralBasis};
use crate::dists::NullModel;
use crate::quadrature::gauss_gegenbauer;
use crate::special::{harmonic_multiplicity, zonal_polynomials};
use crate::{Error, Result};

pub(crate) struct ZonalEval {
    dim: usize,
    degrees: Vec<usize>,
    multiplicities: Vec<f64>,
}

impl ZonalEval {
    fn new(dim: usize, degrees: Vec<usize>) -> Self {
        let multiplicities = degrees.iter().map(|&k| harmonic_multiplicity(dim, k)).collect();
        ZonalEval {
            dim,
            degrees,
            multiplicities,
        }
    }

    /// Addition theorem: `Σ_{deg k} Y(x)Y(y) = N(d,k) P_k(⟨x,y⟩)`.
    pub(crate) fn block_products(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        let t: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>().clamp(-1.0, 1.0);
        let top = self.degrees[..out.len()].iter().copied().max().unwrap_or(0);
        let mut p = vec![0.0; top + 1];
        zonal_polynomials(self.dim, t, &mut p);
        for (b, o) in out.iter_mut().enumerate() {
            *o = self.multiplicities[b] * p[self.degrees[b]];
        }
    }
}

/// Stored pieces of a zonal basis.
pub struct ZonalParts<'a> {
    pub dim: usize,
    pub degrees: &'a [usize],
}

fn funk_hecke(g: &dyn Fn(f64) -> f64, d: usize, degree_max: usize, nodes: usize) -> Result<Vec<f64>> {
    let a = (d as f64 - 3.0) / 2.0;
    let (t, w) = gauss_gegenbauer(nodes, a)?;
    let mut mu = vec![0.0; degree_max + 1];
    let mut p = vec![0.0; degree_max + 1];
    for (ti, wi) in t.iter().zip(&w) {
        let gi = g(*ti);
        zonal_polynomials(d, *ti, &mut p);
        for (m, pk) in mu.iter_mut().zip(&p) {
            *m += wi * gi * pk;
        }
    }
    Ok(mu)
}

/// Funk–Hecke eigenvalues `μ_k = E[g(t) P_k(t)]`, `k = 0..=degree_max`, where
/// `t` has density proportional to `(1 - t²)^{(d-3)/2}`. Each harmonic of degree
/// `k` is an eigenfunction of the zonal kernel `g(⟨x,y⟩)` under the uniform
/// distribution on `S^{d-1}` with eigenvalue `μ_k`. The Gauss–Jacobi rule is
/// doubled until two consecutive refinements agree.
pub fn zonal_degree_eigenvalues(g: &dyn Fn(f64) -> f64, d: usize, degree_max: usize) -> Result<Vec<f64>> {
    if d < 3 {
        return Err(Error::invalid("d", "zonal spectra need ambient dimension d >= 3"));
    }
    let mut nodes = (degree_max + 32).max(64);
    let mut prev = funk_hecke(g, d, degree_max, nodes)?;
    let mut change = f64::INFINITY;
    for _ in 0..5 {
        nodes *= 2;
        let next = funk_hecke(g, d, degree_max, nodes)?;
        let scale = next.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
        change = prev.iter().zip(&next).fold(0.0, |m: f64, (a, b)| m.max((a - b).abs()));
        if !change.is_finite() {
            break;
        }
        if change <= 1e-12 * scale + 1e-300 {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::QuadratureNotConverged(change))
}

/// Spectrum of the zonal kernel `g(⟨x,y⟩)` under the uniform distribution on
/// `S^{d-1}`, one block per harmonic degree `0..=degree_max`, with block
/// multiplicity `N(d,k)`. Degrees whose eigenvalue vanishes at working
/// precision are dropped; blocks are ordered by eigenvalue (ties by degree).
pub fn sphere_zonal_spectrum(
    g: &dyn Fn(f64) -> f64,
    d: usize,
    degree_max: usize,
    kernel_id: impl Into<String>,
) -> Result<SpectralBasis> {
    let mu = zonal_degree_eigenvalues(g, d, degree_max)?;
    let top = mu.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    let tol = 1e-13 * top;
    if let Some((k, v)) = mu.iter().enumerate().find(|(_, v)| **v < -1e3 * tol.max(1e-300)) {
        return Err(Error::invalid(
            "g",
            format!("degree-{k} eigenvalue {v:e} is negative; the profile is not positive definite"),
        ));
    }
    let mut degrees: Vec<usize> = (0..=degree_max).filter(|&k| mu[k] > tol).collect();
    degrees.sort_by(|&a, &b| mu[b].total_cmp(&mu[a]).then(a.cmp(&b)));
    let eigenvalues = degrees.iter().map(|&k| mu[k]).collect();
    SpectralBasis::from_zonal_parts(d, degrees, eigenvalues, kernel_id.into(), None)
}

impl SpectralBasis {
    pub fn zonal_parts(&self) -> Option<ZonalParts<'_>> {
        match self.evaluator() {
            Evaluator::Zonal(z) => Some(ZonalParts {
                dim: z.dim,
                degrees: &z.degrees[..self.len()],
            }),
            _ => None,
        }
    }

    /// Rebuilds a zonal basis. `decay = None` refits it from the eigenvalues.
    pub fn from_zonal_parts(
        d: usize,
        degrees: Vec<usize>,
        eigenvalues: Vec<f64>,
        kernel_id: String,
        decay: Option<f64>,
    ) -> Result<Self> {
        if degrees.len() != eigenvalues.len() {
            return Err(Error::invalid("degrees", "one degree per eigenvalue is required"));
        }
        let eval = ZonalEval::new(d, degrees);
        let degenerate = !eval.degrees.contains(&0);
        let mult = eval.multiplicities.clone();
        let basis = SpectralBasis::assemble(
            eigenvalues,
            mult,
            NullModel::UniformSphere(d),
            kernel_id,
            degenerate,
            Evaluator::Zonal(Arc::new(eval)),
        )?;
        Ok(match decay {
            Some(s) => basis.with_decay_exponent(s),
            None => basis,
        })
    }

    /// Drops the degree-0 block of a zonal basis, which is exactly the
    /// centering of the kernel under the uniform distribution.
    pub fn without_constant_mode(&self) -> Result<Self> {
        let Evaluator::Zonal(z) = self.evaluator() else {
            return Err(Error::invalid("basis", "only zonal bases carry an explicit constant block"));
        };
        let keep: Vec<usize> = (0..self.len()).filter(|&b| z.degrees[b] != 0).collect();
        if keep.is_empty() {
            return Err(Error::invalid("basis", "no nonconstant degrees remain"));
        }
        let degrees = keep.iter().map(|&b| z.degrees[b]).collect();
        let eigenvalues = keep.iter().map(|&b| self.eigenvalues()[b]).collect();
        let id = if self.is_degenerate() {
            self.kernel_id().into()
        } else {
            format!("centered({})", self.kernel_id())
        };
        SpectralBasis::from_zonal_parts(z.dim, degrees, eigenvalues, id, None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::eval_truncated;
    use rand::{Rng, SeedableRng};

    fn random_unit(rng: &mut impl Rng, d: usize) -> Vec<f64> {
        loop {
            let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let r: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if r > 0.1 && r <= 1.0 {
                return v.iter().map(|x| x / r).collect();
            }
        }
    }

    #[test]
    fn constant_profile() {
        let mu = zonal_degree_eigenvalues(&|_| 1.0, 3, 6).unwrap();
        assert!((mu[0] - 1.0).abs() < 1e-14);
        assert!(mu[1..].iter().all(|m| m.abs() < 1e-14));
        let b = sphere_zonal_spectrum(&|_| 1.0, 3, 6, "one").unwrap();
        assert_eq!(b.len(), 1);
        assert!(!b.is_degenerate());
    }

    #[test]
    fn block_sum_at_coincident_points() {
        let b = sphere_zonal_spectrum(&|t: f64| (t - 1.0).exp(), 3, 8, "g").unwrap();
        let x = [0.0, 0.6, 0.8];
        let mut out = vec![0.0; b.len()];
        b.block_products(&x, &x, &mut out);
        let parts = b.zonal_parts().unwrap();
        for (o, &k) in out.iter().zip(parts.degrees) {
            assert!((o - (2 * k + 1) as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn gaussian_profile_reconstruction() {
        let g = |t: f64| (-2.0 * (1.0 - t)).exp();
        let b = sphere_zonal_spectrum(&g, 3, 10, "gauss").unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let x = random_unit(&mut rng, 3);
            let y = random_unit(&mut rng, 3);
            let t: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
            assert!((eval_truncated(&b, &x, &y) - g(t)).abs() < 1e-6);
        }
    }

    #[test]
    fn funk_hecke_matches_closed_form_in_three_dimensions() {
        // μ_k = ½∫ e^{κt} P_k(t) dt, integrated by parts for k = 0, 1.
        let kappa: f64 = 1.5;
        let mu = zonal_degree_eigenvalues(&|t| (kappa * t).exp(), 3, 1).unwrap();
        let m0 = kappa.sinh() / kappa;
        let m1 = kappa.cosh() / kappa - kappa.sinh() / (kappa * kappa);
        assert!((mu[0] - m0).abs() < 1e-13);
        assert!((mu[1] - m1).abs() < 1e-13);
    }

    /// Real spherical harmonics on S², orthonormal under the normalized surface measure.
    fn real_harmonics(l: usize, x: &[f64]) -> Vec<f64> {
        let (ct, phi) = (x[2], x[1].atan2(x[0]));
        let st = (1.0 - ct * ct).max(0.0).sqrt();
        let mut out = Vec::new();
        for m in 0..=l {
            // Associated Legendre P_l^m(ct) without Condon–Shortley phase.
            let mut pmm = 1.0;
            for i in 1..=m {
                pmm *= (2 * i - 1) as f64 * st;
            }
            let plm = if l == m {
                pmm
            } else {
                let mut p0 = pmm;
                let mut p1 = ct * (2 * m + 1) as f64 * pmm;
                for ll in m + 2..=l {
                    let p2 = ((2 * ll - 1) as f64 * ct * p1 - (ll + m - 1) as f64 * p0) / (ll - m) as f64;
                    p0 = p1;
                    p1 = p2;
                }
                p1
            };
            let mut ratio = 1.0;
            for i in (l - m + 1)..=(l + m) {
                ratio /= i as f64;
            }
            let norm = ((2 * l + 1) as f64 * ratio).sqrt();
            if m == 0 {
                out.push(norm * plm);
            } else {
                out.push(2f64.sqrt() * norm * plm * (m as f64 * phi).cos());
                out.push(2f64.sqrt() * norm * plm * (m as f64 * phi).sin());
            }
        }
        out
    }

    #[test]
    fn addition_theorem_agrees_with_explicit_harmonics() {
        let eval = ZonalEval::new(3, (0..=10).collect());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut out = vec![0.0; 11];
        for _ in 0..20 {
            let x = random_unit(&mut rng, 3);
            let y = random_unit(&mut rng, 3);
            eval.block_products(&x, &y, &mut out);
            for l in 0..=10 {
                let hx = real_harmonics(l, &x);
                let hy = real_harmonics(l, &y);
                let direct: f64 = hx.iter().zip(&hy).map(|(a, b)| a * b).sum();
                assert!((direct - out[l]).abs() < 1e-8, "l={l}: {direct} vs {}", out[l]);
            }
        }
    }

    #[test]
    fn rough_profiles_fail_to_converge() {
        let err = zonal_degree_eigenvalues(&|t: f64| t.abs().sqrt(), 3, 4).unwrap_err();
        assert!(matches!(err, Error::QuadratureNotConverged(_)));
    }

    #[test]
    fn removing_the_constant_block_centers() {
        let b = sphere_zonal_spectrum(&|t: f64| (t - 1.0).exp(), 4, 6, "e").unwrap();
        assert!(!b.is_degenerate());
        let c = b.without_constant_mode().unwrap();
        assert!(c.is_degenerate());
        assert_eq!(c.len(), b.len() - 1);
        assert!(c.zonal_parts().unwrap().degrees.iter().all(|&k| k != 0));
    }
}
