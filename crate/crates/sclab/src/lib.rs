//! Semiclassical and mean-field dynamics lab.
//!
//! One-particle density operators on periodic grids evolved by Hartree-Fock,
//! phase-space densities evolved by Vlasov, exact few-fermion Fock-space
//! dynamics, the Wigner/Weyl/Toeplitz maps that connect them, and randomized
//! checks of Schatten-norm inequalities.

pub mod error;
pub mod fft;
pub mod fock;
pub mod grid;
pub mod harness;
pub mod hf;
pub mod ineq;
pub mod io;
pub mod linalg;
pub mod phase;
pub mod potential;
pub mod vlasov;
pub mod wigner;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
