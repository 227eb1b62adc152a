//! Builds spectral bases from kernel and null identifiers.
//!
//! | null                 | kernel            | construction                                       |
//! |----------------------|-------------------|----------------------------------------------------|
//! | `uniform-cube:d=1`   | `cosine`          | exact cosine reference basis                       |
//! | `uniform-cube:d=1`   | any other         | Nyström on Gauss–Legendre nodes, kernel centered   |
//! | `uniform-cube:d=D`   | any               | tensor product of the `d=1` basis, unit constant   |
//! | `uniform-sphere:d=D` | zonal (`gaussian`, `linear`, `constant`) | Funk–Hecke, degree 0 removed |
//! | anything else        | any               | Nyström on Monte-Carlo nodes (needs a seed)        |
//!
//! For sphere nulls the truncation is the largest harmonic degree.

use std::sync::Arc;

use gofkit_core::dists::NullModel;
use gofkit_core::kernel::{center_kernel, Kernel, StandardKernel};
use gofkit_core::quadrature::Quadrature;
use gofkit_core::spectrum::{
    default_node_count, default_truncation, nystrom_decompose, nystrom_spectrum, sphere_zonal_spectrum,
    tensor_product_basis, SpectralBasis,
};
use gofkit_core::sample::Domain;

use crate::{Error, Result};

/// Default number of products kept for tensor-product bases.
pub const DEFAULT_TENSOR_TRUNCATION: usize = 500;
/// Default largest harmonic degree for sphere bases.
pub const DEFAULT_SPHERE_DEGREE: usize = 30;

/// Everything that determines a decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumRequest {
    pub kernel: String,
    pub null: String,
    pub truncation: Option<usize>,
    pub nodes: Option<usize>,
    /// Only used for Monte-Carlo quadrature of non-uniform nulls.
    pub seed: Option<u64>,
}

impl SpectrumRequest {
    pub fn new(kernel: impl Into<String>, null: impl Into<String>) -> Self {
        SpectrumRequest {
            kernel: kernel.into(),
            null: null.into(),
            truncation: None,
            nodes: None,
            seed: None,
        }
    }

    pub fn with_truncation(mut self, k: usize) -> Self {
        self.truncation = Some(k);
        self
    }

    pub fn with_nodes(mut self, n: usize) -> Self {
        self.nodes = Some(n);
        self
    }

    /// Canonical key used to address cached decompositions.
    pub fn cache_key(&self) -> Result<String> {
        let null = NullModel::parse(&self.null)?;
        let opt = |v: Option<usize>| v.map_or_else(|| "auto".to_string(), |v| v.to_string());
        let mut key = format!(
            "{}|{}|{}|{}|{}",
            self.kernel.trim(),
            null.id(),
            opt(self.truncation),
            opt(self.nodes),
            crate::cache::VERSION
        );
        if !matches!(null, NullModel::UniformCube(_) | NullModel::UniformSphere(_)) {
            key.push_str(&format!("|seed={}", self.seed.map_or_else(|| "none".into(), |s| s.to_string())));
        }
        Ok(key)
    }

    pub fn build(&self) -> Result<SpectralBasis> {
        let null = NullModel::parse(&self.null)?;
        match null {
            NullModel::UniformCube(1) => self.interval(),
            NullModel::UniformCube(d) => {
                let k = self.truncation.unwrap_or(DEFAULT_TENSOR_TRUNCATION);
                let factor = SpectrumRequest {
                    null: NullModel::UniformCube(1).id(),
                    truncation: None,
                    ..self.clone()
                }
                .interval_capped(k)?;
                Ok(tensor_product_basis(&factor, d, k)?)
            }
            NullModel::UniformSphere(d) => {
                let kernel = StandardKernel::parse(&self.kernel)?;
                let g = kernel.zonal_profile().ok_or_else(|| {
                    Error::invalid("kernel", format!("`{}` has no zonal profile on the sphere", self.kernel))
                })?;
                let degree = self.truncation.unwrap_or(DEFAULT_SPHERE_DEGREE);
                let raw = sphere_zonal_spectrum(&*g, d, degree, kernel.id())?;
                Ok(raw.without_constant_mode()?)
            }
            NullModel::Other { .. } => {
                let seed = self.seed.ok_or(Error::Missing("seed"))?;
                let spec = null.as_spec()?;
                let n = self.nodes.unwrap_or_else(|| default_node_count(self.truncation.unwrap_or(0)));
                let quad = Quadrature::monte_carlo(&spec, n, seed)?;
                self.nystrom(&quad, self.truncation)
            }
        }
    }

    fn interval(&self) -> Result<SpectralBasis> {
        self.interval_capped(usize::MAX)
    }

    /// One-dimensional basis under Uniform[0,1] with at most `cap` eigenpairs.
    fn interval_capped(&self, cap: usize) -> Result<SpectralBasis> {
        if self.kernel.trim() == "cosine" {
            let k = self.truncation.unwrap_or(10_000).min(cap);
            return Ok(SpectralBasis::cosine_reference(k)?);
        }
        let n = self.nodes.unwrap_or_else(|| default_node_count(self.truncation.unwrap_or(0)));
        let quad = Quadrature::gauss_legendre_unit(n)?;
        let k = self.truncation.map(|k| k.min(cap));
        self.nystrom(&quad, k)
    }

    fn nystrom(&self, quad: &Quadrature, k: Option<usize>) -> Result<SpectralBasis> {
        let kernel = centered(&self.kernel, quad)?;
        let k = match k {
            Some(k) => k,
            None => {
                let spectrum = nystrom_spectrum(kernel.as_ref(), quad)?;
                // Eigenvectors below ~1e-8 λ₁ are dominated by rounding and lose the
                // zero mean of the centered kernel, so stop just above that level.
                let k = default_truncation(&spectrum).max(1);
                let floor = 1e-8 * spectrum[0];
                spectrum[..k].iter().take_while(|l| **l > floor).count().max(1)
            }
        };
        Ok(nystrom_decompose(kernel, quad, k)?)
    }
}

/// `centered(<id>)` for any standard kernel id, centered under `quad`.
pub fn centered(kernel_id: &str, quad: &Quadrature) -> Result<Arc<dyn Kernel>> {
    let base: Arc<dyn Kernel> = Arc::new(StandardKernel::parse(kernel_id.trim())?);
    Ok(Arc::new(center_kernel(base, quad)))
}

/// Kernel from a stored id: standard ids as-is, `centered(...)` re-centered under `quad`.
pub fn kernel_from_id(id: &str, quad: &Quadrature) -> Result<Arc<dyn Kernel>> {
    let id = id.trim();
    match id.strip_prefix("centered(").and_then(|r| r.strip_suffix(')')) {
        Some(inner) => centered(inner, quad),
        None => Ok(Arc::new(StandardKernel::parse(id)?)),
    }
}

/// The domain a null id refers to.
pub fn null_domain(null: &str) -> Result<Domain> {
    Ok(NullModel::parse(null)?.domain())
}
