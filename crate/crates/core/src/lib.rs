//! Numerical laboratory for weakly coupled hierarchical `|phi|^4` models.
//!
//! The crate provides, for the hierarchical lattice in dimensions `d >= 4`:
//!
//! * exact block-covariance algebra for the hierarchical Laplacian under
//!   free and periodic boundary conditions ([`covariance`], [`lattice`]);
//! * the universal single-spin profile functions that govern finite-size
//!   two-point behaviour near criticality ([`profiles`]);
//! * the critical scaling constants, windows, and plateau predictions
//!   derived from them ([`scales`]);
//! * a perturbative coupling-constant recursion ([`flow`]);
//! * an exact functional renormalisation-group recursion with observable
//!   source fields, driven by deterministic Monte Carlo ([`rg`]);
//! * a direct Metropolis sampler of the full lattice measure ([`mcmc`]).
//!
//! The two stochastic routes ([`rg`] and [`mcmc`]) are implemented
//! independently of the analytic ones so that each can serve as a
//! cross-check of the others; the integration tests exercise exactly those
//! comparisons.

pub mod covariance;
pub mod error;
pub mod flow;
pub mod lattice;
pub mod mcmc;
pub mod profiles;
pub mod quad;
pub mod rg;
pub mod rg_vector;
pub mod rng;
pub mod scales;
pub mod special;

pub use error::{Error, Result};
pub use lattice::{Bc, Shape, Site};
