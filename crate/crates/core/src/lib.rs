//! Blind channel estimation for RIS-assisted multiuser mmWave uplinks.
//!
//! The library simulates the full estimation pipeline: codebook-encoded
//! block-wise transmission through a cascaded user-RIS-BS channel,
//! simultaneous-OMP recovery of transmit signals and equivalent channels,
//! Kronecker-structured OMP recovery of the sparse angular cascade, and a
//! Monte-Carlo harness producing weighted-BER / NMSE curves. RIS phase
//! schedules can be drawn at random or designed by Riemannian coherence
//! minimization on the unit-modulus manifold.

pub mod airlink;
pub mod cascade;
pub mod channel;
pub mod codebook;
pub mod config;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod metrics;
pub mod plot;
pub mod recovery;
pub mod ris;

pub use error::{Error, Result};
pub use linalg::{CMat, CVec};
