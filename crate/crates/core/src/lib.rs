//! Kernel-embedding goodness-of-fit testing without the standard library.
//!
//! The crate covers the numerical core: Mercer decompositions of kernels
//! relative to a null distribution ([`spectrum`]), the MMD, moderated MMD and
//! adaptive statistics ([`embedding`]), null calibration ([`calibrate`]) and
//! null/alternative distributions ([`dists`]). It needs only `alloc`.
//!
//! ```
//! use gofkit_core::embedding::{rho_schedule, studentized_stat};
//! use gofkit_core::dists::AlternativeSpec;
//! use gofkit_core::spectrum::{ModeratedSpectrum, SpectralBasis};
//!
//! let basis = SpectralBasis::cosine_reference(200).unwrap();
//! let sample = AlternativeSpec::UniformCube { d: 1 }.sample(500, 7).unwrap();
//! let rho = rho_schedule(500, 1.0, 0.0, 1.0).unwrap();
//! let ms = ModeratedSpectrum::new(&basis, rho).unwrap();
//! let t = studentized_stat(&ms, &sample).unwrap();
//! assert!(t.is_finite());
//! ```

#![no_std]

extern crate alloc;

pub mod calibrate;
pub mod dists;
pub mod embedding;
mod error;
pub mod kernel;
pub mod quadrature;
pub mod rng;
pub mod sample;
pub mod special;
pub mod spectrum;

pub use error::{Error, Result};
