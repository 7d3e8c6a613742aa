//! Gap labels of one-dimensional Schrödinger operators `H = −∂² + V`.
//!
//! Four labels are computed independently and cross-checked per spectral gap:
//! the integrated density of states, the Johnson–Moser rotation number α,
//! the Dirichlet rotation number β, and the odd K-gap label Π (by an operator
//! trace and by a curve formula), together with the boundary force per unit
//! energy.

pub mod dirichlet;
pub mod error;
pub mod harness;
pub mod klabel;
pub mod ode;
pub mod potentials;
pub mod prufer;
mod roots;
pub mod rotation;
pub mod spectrum;
pub mod tridiag;

pub use error::{Error, Result};
pub use potentials::{CosineTerm, PotentialSpec, Window, WindowChain};
