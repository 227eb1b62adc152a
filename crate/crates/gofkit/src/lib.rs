//! Kernel-embedding goodness-of-fit testing with spectral kernels.
//!
//! This crate adds the parts that need an operating system on top of
//! [`gofkit_core`]: spectrum caches on disk, sample CSV files, parallel
//! calibration, the replication harness and the `gofkit` command line.
//!
//! ```no_run
//! use gofkit::bench::{emit, fig1_plan, run_plan, Scale};
//!
//! let plan = fig1_plan(Scale::Desk, 1);
//! let table = run_plan(&plan, None)?;
//! emit(&table, "fig1".as_ref(), &plan.null)?;
//! # Ok::<(), gofkit::Error>(())
//! ```

pub mod bench;
pub mod cache;
pub mod calibration;
pub mod cli;
mod error;
pub mod io;
pub mod probe;
pub mod report;
pub mod resolve;

pub use error::{Error, Result};
pub use gofkit_core::{calibrate, dists, embedding, kernel, quadrature, rng, sample, special, spectrum};
