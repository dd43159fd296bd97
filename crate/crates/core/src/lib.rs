//! Spectral simulation of quantum site percolation on periodic graphs.
//!
//! The library builds finite-hopping-range operators on ℤᵈ-periodic graphs,
//! compresses them to random site-percolation subgraphs, and estimates the
//! integrated density of states (IDS) along box exhaustions as well as
//! through an ensemble trace formula. Supporting machinery covers cluster
//! decompositions, boundary perturbations, closed-walk trace oracles,
//! enumeration of finite cluster shapes and their eigenvalues, and the
//! detection of compactly supported ("molecular") eigenstates.
//!
//! Everything is deterministic: site randomness is counter-based (a fixed
//! 64-bit mixing function of seed, realization index and vertex), so a
//! configuration never changes when the observation box grows, and all
//! ensemble reductions merge in fixed realization order regardless of the
//! worker count.

pub mod enumerate;
pub mod error;
pub mod hashing;
pub mod ids;
pub mod lattice;
pub mod operator;
pub mod percolation;
pub mod spectral;

pub use error::{Error, Result};
