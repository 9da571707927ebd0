//! Maslov-type indices of symplectic paths, spectral flows of Hermitian
//! families and Galerkin Morse indices for linear Hamiltonian boundary
//! problems.

pub mod error;
pub mod harness;
pub mod hamiltonian;
pub mod index_form;
pub mod linalg;
pub mod maslov;
pub mod spectral_flow;
pub mod symplectic;

pub use error::{Error, Result};
pub use linalg::{CMatrix, MorseCounts, TolerancePolicy};
