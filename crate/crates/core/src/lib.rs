//! Discrete Hamiltonian mechanics and discrete Hamilton–Jacobi theory.
//!
//! The crate covers symplectic one-step maps generated by discrete
//! Hamiltonians, the discrete Hamilton–Jacobi equation and its solutions, the
//! discrete Riccati recurrence for linear systems, Bellman dynamic programming
//! for discrete optimal control, and Galerkin discrete control Hamiltonians
//! with internal-stage controls.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dhj;
pub mod dmech;
pub mod docp;
pub mod error;
pub mod galerkin;
pub mod linhj;
pub mod models;
pub mod newton;
pub mod registry;
pub mod types;

pub use error::{Error, Result};
pub use newton::NewtonConfig;
pub use types::{
    DiscreteHamiltonian, DiscreteHamiltonianLeft, DiscreteHamiltonianRight, DiscreteLagrangian,
    PhasePoint, Vector,
};
