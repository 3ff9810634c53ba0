//! Matrix-free second-order optimization of neural quantum states for
//! molecular Hamiltonians.
//!
//! The parameter update is the lowest eigenvector of the energy-centered
//! Hamiltonian projected onto the tangent space `{psi, d_1 psi, .., d_p psi}`,
//! found by implicitly restarted Lanczos using only stochastic or
//! exact-enumeration matrix-vector products.
//!
//! Module map:
//! - [`hilbert`]: occupation-number states, particle-number sectors, excitations
//! - [`hamiltonian`]: FCIDUMP ingestion, Slater-Condon rules, local energies, dense FCI
//! - [`ansatz`]: autoregressive amplitude/phase network with exact sampling
//! - [`estimators`]: energy, gradient and `H_eff` products over a sample batch
//! - [`krylov`]: Lanczos, implicit restarts and the IRL eigensolver
//! - [`optimizer`]: IRL, SL and Adam outer loops with trajectory records

pub mod ansatz;
pub mod error;
pub mod estimators;
pub mod hamiltonian;
pub mod hilbert;
pub mod krylov;
pub mod optimizer;
pub mod par;

pub use error::{NqsError, Result};

/// Hartree to kcal/mol.
pub const HARTREE_TO_KCAL: f64 = 627.509474;
