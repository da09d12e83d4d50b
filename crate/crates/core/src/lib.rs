//! Non-Hermitian two-level physics: complex symmetric eigensystems, double
//! poles of the S matrix and what happens to eigenvectors around them.

pub mod adiabatic;
pub mod branch;
pub mod eigensystem;
pub mod model;
pub mod scattering;

#[cfg(feature = "cli")]
pub mod cli;
