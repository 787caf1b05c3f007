//! Exact oracles and Monte Carlo estimators for disordered circle-valued spin
//! systems (XY, Villain and mixtures) and integer-valued height functions.
//!
//! The crate is organised around a handful of layers:
//!
//! * [`graph`] builds boxes, subdivided and parallel multigraphs, ghost
//!   augmentations and the monotone surgeries.
//! * [`potentials`] holds the special functions and the edge-potential algebra.
//! * [`percolation`] samples quenched disorder and analyses dual crossings.
//! * [`exact`] computes partition functions, correlations and variances on
//!   small instances by variable elimination.
//! * [`mcmc`] runs Metropolis and heat-bath chains at larger scales.
//! * [`duality`] implements the divergence-free angle space and the
//!   generalized XY model on ghost graphs.
//! * [`renorm`] coarse-grains supercritical edge configurations.
//! * [`lab`] wires experiments, CSV output and the acceptance suite.

pub mod duality;
pub mod error;
pub mod exact;
pub mod graph;
pub mod lab;
pub mod mcmc;
pub mod percolation;
pub mod potentials;
pub mod renorm;
pub mod rng;

pub use error::{Error, Result};
