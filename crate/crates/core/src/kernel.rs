//! Pointwise kernels and centering under a null quadrature.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::f64::consts::PI;
#[allow(unused_imports)]
use num_traits::Float;

use crate::quadrature::Quadrature;
use crate::{Error, Result};

/// A symmetric kernel evaluated pointwise.
pub trait Kernel: Send + Sync {
    fn eval(&self, x: &[f64], y: &[f64]) -> f64;

    /// Identifier used for caching and reports.
    fn id(&self) -> String;

    /// `out[i] = K(x, node_i)` for row-major `nodes` of dimension `x.len()`.
    fn row(&self, x: &[f64], nodes: &[f64], out: &mut [f64]) {
        for (o, y) in out.iter_mut().zip(nodes.chunks_exact(x.len())) {
            *o = self.eval(x, y);
        }
    }

    /// Full Gram matrix on `nodes`, row-major.
    fn gram(&self, nodes: &[f64], dim: usize) -> Vec<f64> {
        let n = nodes.len() / dim;
        let mut out = alloc::vec![0.0; n * n];
        for (i, x) in nodes.chunks_exact(dim).enumerate() {
            self.row(x, nodes, &mut out[i * n..(i + 1) * n]);
        }
        out
    }
}

impl<K: Kernel + ?Sized> Kernel for Arc<K> {
    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        (**self).eval(x, y)
    }
    fn id(&self) -> String {
        (**self).id()
    }
    fn row(&self, x: &[f64], nodes: &[f64], out: &mut [f64]) {
        (**self).row(x, nodes, out)
    }
    fn gram(&self, nodes: &[f64], dim: usize) -> Vec<f64> {
        (**self).gram(nodes, dim)
    }
}

/// Built-in kernels addressable by id.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StandardKernel {
    /// `exp(-|x-y|² / (2 bw²))`.
    Gaussian { bandwidth: f64 },
    /// `Σ_{k≤terms} 2 cos(kπx) cos(kπy) / (kπ)²` on `[0,1]`; degenerate under Uniform[0,1].
    CosineSeries { terms: usize },
    /// The infinite cosine series in closed form, `1/3 - max(x,y) + (x² + y²)/2`.
    Cosine,
    /// `<x, y>`.
    Linear,
    /// The constant kernel.
    Constant(f64),
}

impl StandardKernel {
    /// Parses ids such as `gaussian:bw=0.3`, `cosine`, `cosine:terms=200`, `linear`, `constant:c=1`.
    pub fn parse(id: &str) -> Result<Self> {
        let (name, params) = split_id(id);
        let get = |key: &str| -> Result<Option<f64>> {
            params
                .iter()
                .find(|(k, _)| *k == key)
                .map(|(_, v)| v.parse::<f64>().map_err(|_| Error::parse(id, format!("`{key}` is not a number"))))
                .transpose()
        };
        let kernel = match name {
            "gaussian" => {
                let bandwidth = get("bw")?.ok_or_else(|| Error::parse(id, "gaussian kernel needs `bw`"))?;
                StandardKernel::Gaussian { bandwidth }
            }
            "cosine" => match get("terms")? {
                Some(t) => StandardKernel::CosineSeries { terms: t as usize },
                None => StandardKernel::Cosine,
            },
            "linear" => StandardKernel::Linear,
            "constant" => StandardKernel::Constant(get("c")?.unwrap_or(1.0)),
            _ => return Err(Error::parse(id, "unknown kernel")),
        };
        kernel.validate()?;
        Ok(kernel)
    }

    fn validate(&self) -> Result<()> {
        match *self {
            StandardKernel::Gaussian { bandwidth } if !(bandwidth > 0.0) || !bandwidth.is_finite() => {
                Err(Error::invalid("bw", "bandwidth must be positive"))
            }
            StandardKernel::CosineSeries { terms: 0 } => Err(Error::invalid("terms", "need at least one term")),
            _ => Ok(()),
        }
    }

    /// Radial profile `g(t)` with `K(x,y) = g(<x,y>)` on the unit sphere, when one exists.
    pub fn zonal_profile(&self) -> Option<Box<dyn Fn(f64) -> f64 + Send + Sync>> {
        match *self {
            StandardKernel::Gaussian { bandwidth } => {
                let s2 = bandwidth * bandwidth;
                Some(Box::new(move |t: f64| (-(1.0 - t) / s2).exp()))
            }
            StandardKernel::Linear => Some(Box::new(|t| t)),
            StandardKernel::Constant(c) => Some(Box::new(move |_| c)),
            _ => None,
        }
    }
}

impl Kernel for StandardKernel {
    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match *self {
            StandardKernel::Gaussian { bandwidth } => {
                let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                (-d2 / (2.0 * bandwidth * bandwidth)).exp()
            }
            StandardKernel::CosineSeries { terms } => {
                let (a, b) = (PI * x[0], PI * y[0]);
                (1..=terms)
                    .map(|k| {
                        let kf = k as f64;
                        2.0 * (kf * a).cos() * (kf * b).cos() / (kf * PI).powi(2)
                    })
                    .sum()
            }
            StandardKernel::Cosine => {
                let (a, b) = (x[0], y[0]);
                1.0 / 3.0 - a.max(b) + 0.5 * (a * a + b * b)
            }
            StandardKernel::Linear => x.iter().zip(y).map(|(a, b)| a * b).sum(),
            StandardKernel::Constant(c) => c,
        }
    }

    fn id(&self) -> String {
        match *self {
            StandardKernel::Gaussian { bandwidth } => format!("gaussian:bw={bandwidth}"),
            StandardKernel::CosineSeries { terms } => format!("cosine:terms={terms}"),
            StandardKernel::Cosine => "cosine".into(),
            StandardKernel::Linear => "linear".into(),
            StandardKernel::Constant(c) => format!("constant:c={c}"),
        }
    }
}

/// Splits `name:k=v,k=v` into the name and its key/value pairs.
pub(crate) fn split_id(id: &str) -> (&str, Vec<(&str, &str)>) {
    let (name, rest) = id.split_once(':').unwrap_or((id, ""));
    let params = rest
        .split(',')
        .filter(|p| !p.is_empty())
        .map(|p| p.split_once('=').unwrap_or((p, "")))
        .collect();
    (name.trim(), params)
}

/// Wraps a closure as a kernel.
pub struct FnKernel<F> {
    f: F,
    id: String,
}

impl<F: Fn(&[f64], &[f64]) -> f64 + Send + Sync> FnKernel<F> {
    pub fn new(id: impl Into<String>, f: F) -> Self {
        FnKernel { f, id: id.into() }
    }
}

impl<F: Fn(&[f64], &[f64]) -> f64 + Send + Sync> Kernel for FnKernel<F> {
    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        (self.f)(x, y)
    }
    fn id(&self) -> String {
        self.id.clone()
    }
}

/// `K̄(x,y) = K(x,y) - Ê K(x,·) - Ê K(·,y) + Ê Ê K`, with `Ê` the quadrature mean.
pub struct CenteredKernel {
    base: Arc<dyn Kernel>,
    quad: Quadrature,
    node_means: Vec<f64>,
    grand_mean: f64,
}

/// Centers `kernel` under the quadrature approximation of `P₀`.
pub fn center_kernel(kernel: Arc<dyn Kernel>, quad: &Quadrature) -> CenteredKernel {
    let n = quad.len();
    let dim = quad.dim();
    let gram = kernel.gram(quad.nodes(), dim);
    let w = quad.weights();
    let node_means: Vec<f64> = (0..n)
        .map(|i| gram[i * n..(i + 1) * n].iter().zip(w).map(|(k, w)| k * w).sum())
        .collect();
    let grand_mean = node_means.iter().zip(w).map(|(m, w)| m * w).sum();
    CenteredKernel {
        base: kernel,
        quad: quad.clone(),
        node_means,
        grand_mean,
    }
}

impl CenteredKernel {
    pub fn base(&self) -> &Arc<dyn Kernel> {
        &self.base
    }

    pub fn quadrature(&self) -> &Quadrature {
        &self.quad
    }

    /// `Ê K(x, ·)`.
    pub fn mean_at(&self, x: &[f64]) -> f64 {
        self.quad.expect(|y| self.base.eval(x, y))
    }

    fn same_nodes(&self, nodes: &[f64]) -> bool {
        core::ptr::eq(nodes.as_ptr(), self.quad.nodes().as_ptr()) && nodes.len() == self.quad.nodes().len()
            || nodes == self.quad.nodes()
    }
}

impl Kernel for CenteredKernel {
    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        self.base.eval(x, y) - self.mean_at(x) - self.mean_at(y) + self.grand_mean
    }

    fn id(&self) -> String {
        format!("centered({})", self.base.id())
    }

    fn row(&self, x: &[f64], nodes: &[f64], out: &mut [f64]) {
        if self.same_nodes(nodes) {
            self.base.row(x, nodes, out);
            let mx: f64 = out.iter().zip(self.quad.weights()).map(|(k, w)| k * w).sum();
            for (o, m) in out.iter_mut().zip(&self.node_means) {
                *o = *o - mx - m + self.grand_mean;
            }
        } else {
            let mx = self.mean_at(x);
            for (o, y) in out.iter_mut().zip(nodes.chunks_exact(x.len())) {
                *o = self.base.eval(x, y) - mx - self.mean_at(y) + self.grand_mean;
            }
        }
    }

    fn gram(&self, nodes: &[f64], dim: usize) -> Vec<f64> {
        if !self.same_nodes(nodes) {
            let n = nodes.len() / dim;
            let mut out = alloc::vec![0.0; n * n];
            for (i, x) in nodes.chunks_exact(dim).enumerate() {
                self.row(x, nodes, &mut out[i * n..(i + 1) * n]);
            }
            return out;
        }
        let n = self.node_means.len();
        let mut g = self.base.gram(nodes, dim);
        for i in 0..n {
            for j in 0..n {
                g[i * n + j] += self.grand_mean - self.node_means[i] - self.node_means[j];
            }
        }
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn unit_quad() -> Quadrature {
        Quadrature::gauss_legendre_unit(64).unwrap()
    }

    fn sup_norm(k: &dyn Kernel, q: &Quadrature) -> f64 {
        let g = k.gram(q.nodes(), 1);
        g.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    #[test]
    fn constant_kernel_centers_to_zero() {
        let q = unit_quad();
        let c = center_kernel(Arc::new(StandardKernel::Constant(1.0)), &q);
        for x in [0.0, 0.3, 0.77, 1.0] {
            for y in [0.1, 0.5] {
                assert!(c.eval(&[x], &[y]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn linear_kernel_centers_analytically() {
        let q = unit_quad();
        let c = center_kernel(Arc::new(StandardKernel::Linear), &q);
        for x in [0.0, 0.21, 0.5, 0.93] {
            for y in [0.05, 0.44, 1.0] {
                let exact = (x - 0.5) * (y - 0.5);
                assert!((c.eval(&[x], &[y]) - exact).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn degenerate_cosine_kernel_is_unchanged() {
        // Gauss-Legendre integrates cos(200 pi x) exactly only with enough nodes.
        let q = Quadrature::gauss_legendre_unit(400).unwrap();
        let base = Arc::new(StandardKernel::CosineSeries { terms: 200 });
        let c = center_kernel(base.clone(), &q);
        let g0 = base.gram(q.nodes(), 1);
        let g1 = c.gram(q.nodes(), 1);
        let max = g0.iter().zip(&g1).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(max < 1e-10, "max change {max}");
    }

    #[test]
    fn centered_row_means_vanish() {
        let q = unit_quad();
        let base: Arc<dyn Kernel> = Arc::new(StandardKernel::Gaussian { bandwidth: 0.2 });
        let c = center_kernel(base, &q);
        let scale = sup_norm(&StandardKernel::Gaussian { bandwidth: 0.2 }, &q);
        let g = c.gram(q.nodes(), 1);
        let n = q.len();
        for j in 0..n {
            let s: f64 = (0..n).map(|i| q.weights()[i] * g[i * n + j]).sum();
            assert!(s.abs() <= 1e-10 * scale);
        }
        // Row evaluation against the centering nodes agrees with pointwise evaluation.
        let mut row = vec![0.0; n];
        c.row(&[0.37], q.nodes(), &mut row);
        for (i, y) in q.nodes().iter().enumerate() {
            assert!((row[i] - c.eval(&[0.37], &[*y])).abs() < 1e-13);
        }
    }

    #[test]
    fn closed_form_matches_series() {
        let series = StandardKernel::CosineSeries { terms: 20_000 };
        for (x, y) in [(0.5, 0.5), (0.1, 0.7), (0.0, 1.0)] {
            assert!((series.eval(&[x], &[y]) - StandardKernel::Cosine.eval(&[x], &[y])).abs() < 1e-5);
        }
        assert!((StandardKernel::Cosine.eval(&[0.5], &[0.5]) - 1.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn parse_ids() {
        assert_eq!(
            StandardKernel::parse("gaussian:bw=0.3").unwrap(),
            StandardKernel::Gaussian { bandwidth: 0.3 }
        );
        assert_eq!(
            StandardKernel::parse("cosine:terms=200").unwrap(),
            StandardKernel::CosineSeries { terms: 200 }
        );
        assert!(StandardKernel::parse("gaussian").is_err());
        assert!(StandardKernel::parse("gaussian:bw=-1").is_err());
        let k = StandardKernel::parse("gaussian:bw=0.25").unwrap();
        assert_eq!(StandardKernel::parse(&k.id()).unwrap(), k);
    }
}
