use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use nalgebra::{DMatrix, SymmetricEigen};
#[allow(unused_imports)]
use num_traits::Float;

use super::{Evaluator, SpectralBasis};
use crate::kernel::Kernel;
use crate::quadrature::Quadrature;
use crate::{Error, Result};

const FLOOR: f64 = 1e-12;
const SYMMETRY_TOL: f64 = 1e-10;

pub(crate) struct NystromEval {
    kernel: Arc<dyn Kernel>,
    quad: Quadrature,
    rank: usize,
    /// `φ_k(x_i)`, row-major `N × rank`.
    values: Vec<f64>,
    /// Eigenvalues used by the extension formula.
    lambdas: Vec<f64>,
    /// `w_i φ_k(x_i) / λ_k`, row-major `rank × N`.
    coef: Vec<f64>,
}

impl NystromEval {
    fn new(kernel: Arc<dyn Kernel>, quad: Quadrature, lambdas: Vec<f64>, values: Vec<f64>) -> Self {
        let n = quad.len();
        let rank = lambdas.len();
        let w = quad.weights();
        let mut coef = vec![0.0; rank * n];
        for k in 0..rank {
            for i in 0..n {
                coef[k * n + i] = w[i] * values[i * rank + k] / lambdas[k];
            }
        }
        NystromEval {
            kernel,
            quad,
            rank,
            values,
            lambdas,
            coef,
        }
    }

    pub(crate) fn features(&self, x: &[f64], out: &mut [f64]) {
        let n = self.quad.len();
        let mut row = vec![0.0; n];
        self.kernel.row(x, self.quad.nodes(), &mut row);
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.coef[k * n..(k + 1) * n].iter().zip(&row).map(|(c, r)| c * r).sum();
        }
    }

    pub(crate) fn node_amplitudes(&self, k: usize) -> Vec<f64> {
        (0..k)
            .map(|j| {
                self.values
                    .iter()
                    .skip(j)
                    .step_by(self.rank)
                    .fold(0.0, |m: f64, v| m.max(v.abs()))
            })
            .collect()
    }
}

/// Stored pieces of a Nyström basis, sufficient to rebuild it exactly.
pub struct NystromParts<'a> {
    pub kernel: &'a Arc<dyn Kernel>,
    pub quadrature: &'a Quadrature,
    /// Eigenvalues used by the off-node extension (before any rescaling).
    pub extension_eigenvalues: &'a [f64],
    /// Eigenfunction values at the nodes, row-major `N × K`, `K` = extension rank.
    pub values: &'a [f64],
}

fn weighted_gram(kernel: &dyn Kernel, quad: &Quadrature) -> Result<DMatrix<f64>> {
    let n = quad.len();
    let w = quad.weights();
    if w.iter().any(|w| *w <= 0.0) {
        return Err(Error::invalid("quadrature", "Nyström decomposition needs positive weights"));
    }
    let g = kernel.gram(quad.nodes(), quad.dim());
    let scale = g.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    let mut asym: f64 = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            asym = asym.max((g[i * n + j] - g[j * n + i]).abs());
        }
    }
    if asym > SYMMETRY_TOL * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::NotSymmetric(asym));
    }
    let sw: Vec<f64> = w.iter().map(|w| w.sqrt()).collect();
    Ok(DMatrix::from_fn(n, n, |i, j| {
        let sym = 0.5 * (g[i * n + j] + g[j * n + i]);
        sw[i] * sw[j] * sym
    }))
}

fn sorted_eigen(kernel: &dyn Kernel, quad: &Quadrature) -> Result<(Vec<f64>, DMatrix<f64>, Vec<usize>)> {
    let m = weighted_gram(kernel, quad)?;
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    Ok((values, eig.eigenvectors, order))
}

/// All eigenvalues of the weighted Gram matrix, nonincreasing.
pub fn nystrom_spectrum(kernel: &dyn Kernel, quad: &Quadrature) -> Result<Vec<f64>> {
    Ok(sorted_eigen(kernel, quad)?.0)
}

/// Smallest `K` with `λ_K / λ_1 ≤ 1e-8`, capped at `10⁴` and at the list length.
pub fn default_truncation(eigenvalues: &[f64]) -> usize {
    let cap = eigenvalues.len().min(10_000);
    let Some(&first) = eigenvalues.first() else {
        return 0;
    };
    eigenvalues
        .iter()
        .take(cap)
        .position(|l| *l <= 1e-8 * first)
        .map_or(cap, |i| i + 1)
}

/// Default node count `max(4K, 256)`.
pub fn default_node_count(k: usize) -> usize {
    (4 * k).max(256)
}

/// Top-`k` eigenpairs of the weighted Gram matrix `[√(w_i w_j) K(x_i, x_j)]`.
///
/// Eigenfunctions at nodes are `u_{ik} / √w_i`; off-node values use the
/// Nyström extension. Each sign is fixed so that the quadrature inner product
/// with a Gaussian bump centered at the first node is nonnegative, with ties
/// resolved toward a positive value at that node.
pub fn nystrom_decompose(kernel: Arc<dyn Kernel>, quad: &Quadrature, k: usize) -> Result<SpectralBasis> {
    let n = quad.len();
    if k == 0 || k > n {
        return Err(Error::invalid("K", format!("truncation must be in 1..={n}")));
    }
    let (eigenvalues, vectors, order) = sorted_eigen(kernel.as_ref(), quad)?;
    let top = eigenvalues[0];
    let floor = FLOOR * top.max(0.0);
    for (j, &l) in eigenvalues.iter().take(k).enumerate() {
        if !(l > floor) {
            return Err(Error::EigenvalueFloor {
                index: j + 1,
                value: l,
                floor,
            });
        }
    }
    let w = quad.weights();
    let d = quad.dim();
    let x0 = quad.node(0).to_vec();
    let reference: Vec<f64> = quad
        .nodes()
        .chunks_exact(d)
        .map(|x| {
            let r2: f64 = x.iter().zip(&x0).map(|(a, b)| (a - b) * (a - b)).sum();
            (-r2 / 0.02).exp()
        })
        .collect();
    let mut values = vec![0.0; n * k];
    let mut degenerate = true;
    for j in 0..k {
        let col = vectors.column(order[j]);
        let phi: Vec<f64> = (0..n).map(|i| col[i] / w[i].sqrt()).collect();
        let inner: f64 = (0..n).map(|i| w[i] * phi[i] * reference[i]).sum();
        let flip = if inner.abs() > 1e-12 { inner < 0.0 } else { phi[0] < 0.0 };
        let sign = if flip { -1.0 } else { 1.0 };
        let mean: f64 = (0..n).map(|i| w[i] * phi[i]).sum();
        if mean.abs() > 1e-6 {
            degenerate = false;
        }
        for i in 0..n {
            values[i * k + j] = sign * phi[i];
        }
    }
    let lambdas = eigenvalues[..k].to_vec();
    let eval = NystromEval::new(kernel.clone(), quad.clone(), lambdas.clone(), values);
    SpectralBasis::assemble(
        lambdas,
        vec![1.0; k],
        quad.null().clone(),
        kernel.id(),
        degenerate,
        Evaluator::Nystrom(Arc::new(eval)),
    )
}

impl SpectralBasis {
    /// Stored pieces of a Nyström basis; `None` for other constructions.
    pub fn nystrom_parts(&self) -> Option<NystromParts<'_>> {
        match self.evaluator() {
            Evaluator::Nystrom(e) => Some(NystromParts {
                kernel: &e.kernel,
                quadrature: &e.quad,
                extension_eigenvalues: &e.lambdas,
                values: &e.values,
            }),
            _ => None,
        }
    }

    /// Rebuilds a Nyström basis from stored pieces. `eigenvalues` are the
    /// reported eigenvalues (possibly truncated or rescaled relative to the
    /// extension eigenvalues).
    #[allow(clippy::too_many_arguments)]
    pub fn from_nystrom_parts(
        kernel: Arc<dyn Kernel>,
        quadrature: Quadrature,
        extension_eigenvalues: Vec<f64>,
        values: Vec<f64>,
        eigenvalues: Vec<f64>,
        decay: f64,
        degenerate: bool,
    ) -> Result<Self> {
        let rank = extension_eigenvalues.len();
        if values.len() != rank * quadrature.len() || eigenvalues.len() > rank {
            return Err(Error::invalid("values", "array shapes do not match the quadrature and rank"));
        }
        let null = quadrature.null().clone();
        let id = kernel.id();
        let k = eigenvalues.len();
        let eval = NystromEval::new(kernel, quadrature, extension_eigenvalues, values);
        let basis = SpectralBasis::assemble(
            eigenvalues,
            vec![1.0; k],
            null,
            id,
            degenerate,
            Evaluator::Nystrom(Arc::new(eval)),
        )?;
        Ok(basis.with_decay_exponent(decay))
    }
}
