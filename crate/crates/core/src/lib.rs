//! Shallow convolutional wavefunctions for the periodic SU(M) exchange chain.
//!
//! The crate is organised bottom-up:
//!
//! * [`spinchain`] enumerates the zero-magnetization basis, applies symmetry
//!   operations and partitions the basis into orbits.
//! * [`motif`] counts cyclic K-substrings ("motifs"), builds motif count
//!   matrices and computes their exact rank.
//! * [`ansatz`] evaluates the CNN, CPS and MaxEnt wavefunctions in their
//!   shared exponential form, and implements the grand-sum projection.
//! * [`maxent`] fits MaxEnt multipliers to target motif expectation values.
//! * [`exact`] is the exact-diagonalization oracle, together with reduced
//!   density matrices and the entanglement-Hamiltonian model.
//! * [`vmc`] holds the Metropolis sampler, estimators and training loop.
//! * [`analysis`] computes error metrics, motif features and OLS fits.

pub mod analysis;
pub mod ansatz;
mod error;
pub mod exact;
pub mod lanczos;
pub mod maxent;
pub mod motif;
pub mod rank;
pub mod rng;
pub mod spinchain;
pub mod vmc;

pub use error::{Error, Result};
