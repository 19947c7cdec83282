//! Coarse-graining error analysis for harmonic transition-state-theory
//! rates.
//!
//! A 1-D chain with a weakened Lennard-Jones bond under tension has a
//! first-order saddle for bond rupture. Eliminating "constrained" atoms from
//! the saddle Hessian by a Schur complement gives a coarse dynamical matrix
//! whose unstable eigenvalue overestimates the rate; this crate measures that
//! error for different repatom meshes and checks the identities that explain
//! it.
//!
//! Modules, bottom to top:
//! - [`chain`]: energies, gradients and Hessians in mass-weighted coordinates
//! - [`stationary`]: minima and saddles (drag-relax and force-balance roots)
//! - [`coarse`]: repatom meshes, Hessian partitions and Schur complements
//! - [`rate`]: spectra, log-domain partition functions, rates, error terms
//! - [`sweep`] / [`verify`]: experiment orchestration, CSV, invariant suite

pub mod chain;
pub mod coarse;
pub mod error;
pub mod linalg;
pub mod oracles;
pub mod rate;
pub mod stationary;
pub mod sweep;
pub mod verify;

pub use error::{Error, Result};
