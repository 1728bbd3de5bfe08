//! Simulation and Bayesian sensing toolkit for a driven optomechanical cavity
//! observed by continuous photon counting.
//!
//! The crate is organised bottom-up: [`fock`] holds the truncated two-mode
//! Hilbert space, [`model`] the Hamiltonians, [`closed`] and [`open`] the
//! deterministic propagation, [`trajectory`] the stochastic click records,
//! and [`statistics`], [`inference`] and [`metrology`] the analyses built on top.

pub mod error;
pub mod fock;
pub mod linalg;
pub mod model;
pub mod closed;
pub mod open;
pub mod statistics;
pub mod trajectory;
pub mod inference;
pub mod metrology;

pub use error::{Error, Result};
pub use fock::{FockSpace, Mode, Operator, State};
pub use model::{DetuningRegime, Parameter, SystemParams};
