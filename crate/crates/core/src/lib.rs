//! De Broglie-Bohm trajectories of a spin-1/2 particle released from a spherical box.
//!
//! The crate covers the bound ground state (Pauli and Dirac), the free
//! evolution after the walls are removed, and a Monte Carlo time-of-flight
//! momentum measurement built on top of it.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics_bound;
pub mod dynamics_free;
pub mod ensemble;
pub mod error;
pub mod ode;
pub mod quad;
pub mod quantum_state;
pub mod specfun;
pub mod vec3;

pub use error::{Error, Result};
