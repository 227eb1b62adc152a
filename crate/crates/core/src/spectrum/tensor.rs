use alloc::collections::{BTreeSet, BinaryHeap};
use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use super::{Evaluator, SpectralBasis};
use crate::dists::NullModel;
use crate::sample::Domain;
use crate::{Error, Result};

/// Options for [`tensor_product_basis_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TensorConfig {
    /// Eigenvalue of the constant mode in each coordinate.
    pub constant_eigenvalue: f64,
    /// Largest number of lattice points (visited plus queued) the search may hold.
    pub frontier_budget: usize,
}

impl Default for TensorConfig {
    fn default() -> Self {
        TensorConfig {
            constant_eigenvalue: 1.0,
            frontier_budget: 5_000_000,
        }
    }
}

pub(crate) struct TensorEval {
    factor: SpectralBasis,
    dim: usize,
    /// Per product and coordinate: 0 for the constant mode, `j + 1` for factor eigenfunction `j`.
    codes: Vec<u32>,
}

impl TensorEval {
    fn max_code(&self, k: usize) -> usize {
        self.codes[..k * self.dim].iter().copied().max().unwrap_or(0) as usize
    }

    pub(crate) fn features(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let m = self.max_code(out.len());
        let mut per_coord = vec![0.0; self.dim * m];
        for (j, xj) in x.iter().enumerate() {
            self.factor.features(&[*xj], &mut per_coord[j * m..(j + 1) * m])?;
        }
        for (p, o) in out.iter_mut().enumerate() {
            let mut v = 1.0;
            for (j, &c) in self.codes[p * self.dim..(p + 1) * self.dim].iter().enumerate() {
                if c > 0 {
                    v *= per_coord[j * m + c as usize - 1];
                }
            }
            *o = v;
        }
        Ok(())
    }

    pub(crate) fn sup_norms(&self, k: usize) -> Result<Vec<f64>> {
        let sup = self.factor.sup_norms()?;
        Ok((0..k)
            .map(|p| {
                self.codes[p * self.dim..(p + 1) * self.dim]
                    .iter()
                    .filter(|&&c| c > 0)
                    .map(|&c| sup[c as usize - 1])
                    .product()
            })
            .collect())
    }
}

/// Stored pieces of a tensor-product basis.
pub struct TensorParts<'a> {
    pub factor: &'a SpectralBasis,
    pub dim: usize,
    pub codes: &'a [u32],
}

struct Node {
    value: f64,
    levels: Vec<u16>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // Max-heap: larger value first, then lexicographically smaller level vector.
    fn cmp(&self, other: &Self) -> Ordering {
        self.value
            .total_cmp(&other.value)
            .then_with(|| other.levels.cmp(&self.levels))
    }
}

/// `K` largest products over `[0,1]^d` with unit constant-mode eigenvalue.
pub fn tensor_product_basis(factor: &SpectralBasis, d: usize, k: usize) -> Result<SpectralBasis> {
    tensor_product_basis_with(factor, d, k, TensorConfig::default())
}

/// `K` largest products `Π_j λ_{k_j}` of a one-dimensional factor basis, where
/// each coordinate may also take the constant mode. The all-constant product
/// is excluded. Enumeration is a best-first search over the monotone lattice
/// of per-coordinate levels, ordered by value and then by level vector.
pub fn tensor_product_basis_with(
    factor: &SpectralBasis,
    d: usize,
    k: usize,
    config: TensorConfig,
) -> Result<SpectralBasis> {
    if factor.domain() != Domain::Cube(1) {
        return Err(Error::invalid("factor", "tensor products need a one-dimensional factor basis"));
    }
    if !factor.has_features() {
        return Err(Error::FeaturesUnavailable);
    }
    if d == 0 || k == 0 {
        return Err(Error::invalid("d", "dimension and truncation must be positive"));
    }
    let c0 = config.constant_eigenvalue;
    if !(c0 > 0.0) {
        return Err(Error::invalid("constant_eigenvalue", "must be positive"));
    }
    // Per-coordinate levels sorted nonincreasing; constant placed before equal eigenvalues.
    let mut levels: Vec<(f64, u32)> = Vec::with_capacity(factor.len() + 1);
    let mut placed = false;
    for (j, &l) in factor.eigenvalues().iter().enumerate() {
        if !placed && c0 >= l {
            levels.push((c0, 0));
            placed = true;
        }
        levels.push((l, j as u32 + 1));
    }
    if !placed {
        levels.push((c0, 0));
    }
    if levels.len() > u16::MAX as usize {
        return Err(Error::invalid("factor", "factor basis too long for the lattice search"));
    }
    let const_level = levels.iter().position(|l| l.1 == 0).unwrap() as u16;
    let value_of = |lv: &[u16]| lv.iter().map(|&l| levels[l as usize].0).product::<f64>();

    let mut heap = BinaryHeap::new();
    let mut seen = BTreeSet::new();
    let start = vec![0u16; d];
    heap.push(Node {
        value: value_of(&start),
        levels: start.clone(),
    });
    seen.insert(start);
    let mut eigenvalues = Vec::with_capacity(k);
    let mut codes = Vec::with_capacity(k * d);
    while eigenvalues.len() < k {
        let Some(node) = heap.pop() else {
            break;
        };
        if !node.levels.iter().all(|&l| l == const_level) {
            eigenvalues.push(node.value);
            codes.extend(node.levels.iter().map(|&l| levels[l as usize].1));
        }
        for j in 0..d {
            let next = node.levels[j] as usize + 1;
            if next < levels.len() {
                let mut lv = node.levels.clone();
                lv[j] = next as u16;
                if seen.insert(lv.clone()) {
                    heap.push(Node {
                        value: value_of(&lv),
                        levels: lv,
                    });
                }
            }
        }
        if seen.len() > config.frontier_budget {
            return Err(Error::FrontierBudget(config.frontier_budget));
        }
    }
    if eigenvalues.len() < k {
        return Err(Error::invalid(
            "K",
            format!("only {} products are available", eigenvalues.len()),
        ));
    }
    let null = match factor.null() {
        NullModel::UniformCube(1) => NullModel::UniformCube(d),
        other => NullModel::Other {
            id: format!("product({})^{d}", other.id()),
            domain: Domain::Cube(d),
        },
    };
    let id = format!("tensor(d={d},c0={c0};{})", factor.kernel_id());
    let degenerate = factor.is_degenerate();
    let eval = TensorEval {
        factor: factor.clone(),
        dim: d,
        codes,
    };
    let fallback = factor.decay_exponent() / d as f64;
    let mut basis = SpectralBasis::assemble(
        eigenvalues,
        vec![1.0; k],
        null,
        id,
        degenerate,
        Evaluator::Tensor(Arc::new(eval)),
    )?;
    if k < 8 {
        basis = basis.with_decay_exponent(fallback);
    }
    Ok(basis)
}

impl SpectralBasis {
    pub fn tensor_parts(&self) -> Option<TensorParts<'_>> {
        match self.evaluator() {
            Evaluator::Tensor(t) => Some(TensorParts {
                factor: &t.factor,
                dim: t.dim,
                codes: &t.codes,
            }),
            _ => None,
        }
    }

    /// Rebuilds a tensor-product basis from stored codes (`dim` entries per product).
    pub fn from_tensor_parts(
        factor: SpectralBasis,
        dim: usize,
        codes: Vec<u32>,
        eigenvalues: Vec<f64>,
        kernel_id: String,
        null: NullModel,
        decay: f64,
    ) -> Result<Self> {
        let k = eigenvalues.len();
        if dim == 0 || codes.len() != k * dim {
            return Err(Error::invalid("codes", "expected one code per coordinate and product"));
        }
        if codes.iter().any(|&c| c as usize > factor.len()) {
            return Err(Error::invalid("codes", "code refers past the end of the factor basis"));
        }
        if null.domain() != Domain::Cube(dim) {
            return Err(Error::DomainMismatch {
                expected: Domain::Cube(dim),
                found: null.domain(),
            });
        }
        let degenerate = factor.is_degenerate();
        let eval = TensorEval { factor, dim, codes };
        let basis = SpectralBasis::assemble(
            eigenvalues,
            vec![1.0; k],
            null,
            kernel_id,
            degenerate,
            Evaluator::Tensor(Arc::new(eval)),
        )?;
        Ok(basis.with_decay_exponent(decay))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factor(eigs: &[f64]) -> SpectralBasis {
        let n = eigs.len();
        SpectralBasis::from_features(
            eigs.to_vec(),
            Arc::new(|k, x: &[f64]| ((k + 1) as f64 * x[0]).cos()),
            vec![1.0; n],
            NullModel::UniformCube(1),
            "toy",
            true,
        )
        .unwrap()
    }

    fn exhaustive(eigs: &[f64], d: usize, k: usize) -> Vec<f64> {
        let mut levels = vec![1.0];
        levels.extend_from_slice(eigs);
        let m = levels.len();
        let mut all = Vec::new();
        let total = m.pow(d as u32);
        for code in 1..total {
            let mut c = code;
            let mut v = 1.0;
            for _ in 0..d {
                v *= levels[c % m];
                c /= m;
            }
            all.push(v);
        }
        all.sort_by(|a, b| b.total_cmp(a));
        all.truncate(k);
        all
    }

    #[test]
    fn two_dimensional_example() {
        let b = tensor_product_basis(&factor(&[0.4, 0.1]), 2, 4).unwrap();
        assert_eq!(b.eigenvalues(), &[0.4, 0.4, 0.4 * 0.4, 0.1]);
        let b5 = tensor_product_basis(&factor(&[0.4, 0.1]), 2, 5).unwrap();
        assert_eq!(b5.eigenvalues()[4], 0.1);
    }

    #[test]
    fn one_dimension_is_the_factor() {
        let f = factor(&[0.5, 0.2, 0.1, 0.05]);
        let b = tensor_product_basis(&f, 1, 3).unwrap();
        assert_eq!(b.eigenvalues(), &f.eigenvalues()[..3]);
        let mut a = vec![0.0; 3];
        let mut c = vec![0.0; 3];
        b.features(&[0.3], &mut a).unwrap();
        f.features(&[0.3], &mut c).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn matches_exhaustive_enumeration() {
        let eigs: Vec<f64> = (1..=8).map(|k| 1.0 / (k * k) as f64 * 0.3).collect();
        for d in 1..=3 {
            for k in [1, 7, 20, 50] {
                let total = 9usize.pow(d as u32) - 1;
                if k > total {
                    continue;
                }
                let b = tensor_product_basis(&factor(&eigs), d, k).unwrap();
                let want = exhaustive(&eigs, d, k);
                for (g, w) in b.eigenvalues().iter().zip(&want) {
                    assert!((g - w).abs() <= 1e-15 * w, "d={d} k={k}");
                }
            }
        }
    }

    #[test]
    fn top_product_pairs_largest_with_constants() {
        let b = tensor_product_basis(&factor(&[0.3, 0.2]), 6, 1).unwrap();
        assert_eq!(b.eigenvalues()[0], 0.3);
    }

    #[test]
    fn budget_is_enforced() {
        let eigs: Vec<f64> = (1..=50).map(|k| 1.0 / (k * k) as f64).collect();
        let cfg = TensorConfig {
            constant_eigenvalue: 1.0,
            frontier_budget: 100,
        };
        assert_eq!(
            tensor_product_basis_with(&factor(&eigs), 10, 500, cfg).unwrap_err(),
            Error::FrontierBudget(100)
        );
    }

    #[test]
    fn features_are_coordinate_products() {
        let f = factor(&[0.4, 0.1]);
        let b = tensor_product_basis(&f, 2, 4).unwrap();
        let x = [0.2, 0.7];
        let mut out = vec![0.0; 4];
        b.features(&x, &mut out).unwrap();
        // Order: (φ1,1), (1,φ1) [ties by level vector], (φ1,φ1), (φ2,1)
        let p = |k: usize, t: f64| ((k + 1) as f64 * t).cos();
        let want = [p(0, x[1]), p(0, x[0]), p(0, x[0]) * p(0, x[1]), p(1, x[1])];
        for (o, w) in out.iter().zip(&want) {
            assert!((o - w).abs() < 1e-15);
        }
    }
}
