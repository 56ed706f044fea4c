//! Reduced quantum dynamics of a nonrelativistic charged particle coupled to
//! the electromagnetic vacuum.
//!
//! The library evaluates the regularized vacuum kernels, propagates the
//! second-order master equation for the reduced density matrix, integrates
//! the classical Abraham-Lorentz equation alongside its runaway-free quantum
//! counterpart, and computes coherence-length and switched-coupling
//! (false-decoherence) quantities.

pub mod config;
pub mod decoherence;
pub mod eom;
pub mod experiment;
pub mod kernels;
pub mod linalg;
pub mod propagator;
pub mod quad;
pub mod units;
