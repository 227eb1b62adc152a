//! Discrete approximations of null distributions.

use alloc::vec::Vec;
use core::f64::consts::PI;
use nalgebra::{DMatrix, SymmetricEigen};
#[allow(unused_imports)]
use num_traits::Float;

use crate::dists::{AlternativeSpec, NullModel};
use crate::sample::Domain;
use crate::{Error, Result};

/// Nodes and nonnegative weights summing to one, approximating a null `P₀`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadrature {
    null: NullModel,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Quadrature {
    pub fn new(null: NullModel, nodes: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let domain = null.domain();
        let d = domain.dim();
        if weights.is_empty() || nodes.len() != weights.len() * d {
            return Err(Error::invalid(
                "nodes",
                alloc::format!("{} coordinates for {} weights in dimension {d}", nodes.len(), weights.len()),
            ));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::invalid("weights", "weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(
                "weights",
                alloc::format!("weights sum to {total}, expected 1"),
            ));
        }
        if let Some(index) = nodes.chunks_exact(d).position(|x| !domain.contains(x)) {
            return Err(Error::OutOfDomain { index, domain });
        }
        Ok(Quadrature { null, nodes, weights })
    }

    /// Gauss–Legendre rule mapped to `[0,1]`, approximating Uniform[0,1].
    pub fn gauss_legendre_unit(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("nodes", "need at least one node"));
        }
        let (t, w) = gauss_legendre(n);
        let nodes = t.iter().map(|x| 0.5 * (x + 1.0)).collect();
        let mut weights: Vec<f64> = w.iter().map(|w| 0.5 * w).collect();
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        Quadrature::new(NullModel::UniformCube(1), nodes, weights)
    }

    /// Equal-weight rule built from `n` i.i.d. draws of `spec`.
    pub fn monte_carlo(spec: &AlternativeSpec, n: usize, seed: u64) -> Result<Self> {
        let sample = spec.sample(n, seed)?;
        let weights = alloc::vec![1.0 / n as f64; n];
        Quadrature::new(NullModel::from_spec(spec), sample.as_slice().to_vec(), weights)
    }

    pub fn null(&self) -> &NullModel {
        &self.null
    }

    pub fn domain(&self) -> Domain {
        self.null.domain()
    }

    pub fn dim(&self) -> usize {
        self.domain().dim()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn node(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.nodes[i * d..(i + 1) * d]
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Quadrature expectation of `f`.
    pub fn expect(&self, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
        self.nodes
            .chunks_exact(self.dim())
            .zip(&self.weights)
            .map(|(x, w)| w * f(x))
            .sum()
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` (weights sum to 2), by Newton
/// iteration on the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    if n == 1 {
        return (alloc::vec![0.0], alloc::vec![2.0]);
    }
    let mut nodes = alloc::vec![0.0; n];
    let mut weights = alloc::vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut prev, mut cur) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let next = ((2.0 * kf - 1.0) * x * cur - (kf - 1.0) * prev) / kf;
                prev = cur;
                cur = next;
            }
            dp = nf * (x * cur - prev) / (x * x - 1.0);
            let dx = cur / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Gauss–Jacobi rule for the symmetric weight `(1 - t²)^a` on `[-1, 1]`, `a > -1`,
/// by Golub–Welsch. Weights are normalized to sum to one.
pub fn gauss_gegenbauer(n: usize, a: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 || !(a > -1.0) {
        return Err(Error::invalid("a", "need n >= 1 and exponent a > -1"));
    }
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let kf = k as f64;
        let s = 2.0 * kf + 2.0 * a;
        let b = 2.0 / s * (kf * (kf + a) * (kf + a) * (kf + 2.0 * a) / (s * s - 1.0)).sqrt();
        jacobi[(k - 1, k)] = b;
        jacobi[(k, k - 1)] = b;
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    Ok((
        pairs.iter().map(|p| p.0).collect(),
        pairs.iter().map(|p| p.1 / total).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(10);
        let total: f64 = w.iter().sum();
        assert!((total - 2.0).abs() < 1e-14);
        // ∫ t^18 dt over [-1,1] = 2/19, degree 2n-2 = 18 is exact
        let v: f64 = x.iter().zip(&w).map(|(t, w)| w * t.powi(18)).sum();
        assert!((v - 2.0 / 19.0).abs() < 1e-14);
    }

    #[test]
    fn legendre_small_orders() {
        let (x, w) = gauss_legendre(1);
        assert_eq!((x[0], w[0]), (0.0, 2.0));
        let (x, _) = gauss_legendre(2);
        assert!((x[1] - 1.0 / 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn unit_rule_is_a_probability() {
        let q = Quadrature::gauss_legendre_unit(512).unwrap();
        assert!((q.weights().iter().sum::<f64>() - 1.0).abs() < 1e-13);
        let mean = q.expect(|x| x[0]);
        let second = q.expect(|x| x[0] * x[0]);
        assert!((mean - 0.5).abs() < 1e-14);
        assert!((second - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn gegenbauer_matches_legendre_for_zero_exponent() {
        let (x, w) = gauss_gegenbauer(12, 0.0).unwrap();
        let (xl, wl) = gauss_legendre(12);
        for i in 0..12 {
            assert!((x[i] - xl[i]).abs() < 1e-13);
            assert!((w[i] - wl[i] / 2.0).abs() < 1e-13);
        }
    }

    #[test]
    fn gegenbauer_moments() {
        // weight (1 - t²)^{1}: normalized E[t²] = (∫ t²(1-t²)) / (∫ (1-t²)) = (4/15) / (4/3) = 1/5
        let (x, w) = gauss_gegenbauer(8, 1.0).unwrap();
        let m2: f64 = x.iter().zip(&w).map(|(t, w)| w * t * t).sum();
        assert!((m2 - 0.2).abs() < 1e-13);
    }

    #[test]
    fn rejects_bad_weights() {
        let err = Quadrature::new(NullModel::UniformCube(1), alloc::vec![0.1, 0.2], alloc::vec![0.5, 0.6]);
        assert!(err.is_err());
        let err = Quadrature::new(NullModel::UniformCube(1), alloc::vec![0.1, 0.2], alloc::vec![1.5, -0.5]);
        assert!(err.is_err());
    }
}
