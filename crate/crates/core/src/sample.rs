use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;
#[allow(unused_imports)]
use num_traits::Float;

use crate::{Error, Result};

/// Where observations live.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Domain {
    /// The unit cube `[0,1]^d`.
    Cube(usize),
    /// The unit sphere `S^{d-1}` embedded in `R^d`.
    Sphere(usize),
}

impl Domain {
    /// Number of coordinates per point.
    pub fn dim(&self) -> usize {
        match *self {
            Domain::Cube(d) | Domain::Sphere(d) => d,
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        if x.len() != self.dim() || x.iter().any(|v| !v.is_finite()) {
            return false;
        }
        match self {
            Domain::Cube(_) => x.iter().all(|&v| (-1e-12..=1.0 + 1e-12).contains(&v)),
            Domain::Sphere(_) => {
                let norm2: f64 = x.iter().map(|v| v * v).sum();
                (norm2.sqrt() - 1.0).abs() <= 1e-8
            }
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Domain::Cube(d) => write!(f, "[0,1]^{d}"),
            Domain::Sphere(d) => write!(f, "S^{}", d.saturating_sub(1)),
        }
    }
}

/// An ordered batch of observations, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    domain: Domain,
    data: Vec<f64>,
}

impl Sample {
    /// Builds a sample from row-major coordinates, checking every point lies in `domain`.
    pub fn new(domain: Domain, data: Vec<f64>) -> Result<Self> {
        let d = domain.dim();
        if d == 0 {
            return Err(Error::invalid("dim", "dimension must be positive"));
        }
        if data.is_empty() {
            return Err(Error::EmptySample);
        }
        if data.len() % d != 0 {
            return Err(Error::invalid(
                "data",
                alloc::format!("{} coordinates is not a multiple of dimension {d}", data.len()),
            ));
        }
        if let Some(index) = data.chunks_exact(d).position(|x| !domain.contains(x)) {
            return Err(Error::OutOfDomain { index, domain });
        }
        Ok(Sample { domain, data })
    }

    /// One-dimensional sample on `[0,1]`.
    pub fn from_scalars(values: &[f64]) -> Result<Self> {
        Sample::new(Domain::Cube(1), values.to_vec())
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.data[i * d..(i + 1) * d]
    }

    pub fn points(&self) -> core::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Indices sorting the points lexicographically. Statistics accumulate in
    /// this order so that they are bitwise invariant under reordering.
    pub fn canonical_order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| {
            self.point(a)
                .iter()
                .zip(self.point(b))
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| *o != Ordering::Equal)
                .unwrap_or(Ordering::Equal)
        });
        idx
    }

    /// The sample with its points reordered by `order`.
    pub fn permuted(&self, order: &[usize]) -> Sample {
        let mut data = Vec::with_capacity(self.data.len());
        for &i in order {
            data.extend_from_slice(self.point(i));
        }
        Sample {
            domain: self.domain,
            data,
        }
    }

    /// Concatenates two samples over the same domain.
    pub fn concat(&self, other: &Sample) -> Result<Sample> {
        if self.domain != other.domain {
            return Err(Error::DomainMismatch {
                expected: self.domain,
                found: other.domain,
            });
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Sample {
            domain: self.domain,
            data,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn rejects_points_outside_the_cube() {
        let err = Sample::new(Domain::Cube(1), vec![0.2, 1.5]).unwrap_err();
        assert_eq!(
            err,
            Error::OutOfDomain {
                index: 1,
                domain: Domain::Cube(1)
            }
        );
    }

    #[test]
    fn rejects_off_sphere_points() {
        assert!(Sample::new(Domain::Sphere(2), vec![1.0, 0.0, 0.6, 0.6]).is_err());
        assert!(Sample::new(Domain::Sphere(2), vec![1.0, 0.0, 0.6, 0.8]).is_ok());
    }

    #[test]
    fn empty_and_ragged() {
        assert_eq!(Sample::new(Domain::Cube(2), vec![]), Err(Error::EmptySample));
        assert!(Sample::new(Domain::Cube(2), vec![0.1, 0.2, 0.3]).is_err());
    }

    #[test]
    fn canonical_order_sorts_lexicographically() {
        let s = Sample::new(Domain::Cube(2), vec![0.5, 0.1, 0.2, 0.9, 0.5, 0.0]).unwrap();
        assert_eq!(s.canonical_order(), vec![1, 2, 0]);
    }
}
