//! Quantum Fisher information (QFI) and symmetric logarithmic derivative (SLD)
//! of parameterized mixed states, computed by truncated integration of the
//! Lyapunov integral `L = 2 \int_0^X e^{-rho s} drho e^{-rho s} ds`.
//!
//! The crate ships two interchangeable backends for the integrand propagation:
//! a dense one that works in the eigenbasis of `rho` (exact propagation, small
//! systems) and a matrix-product-operator one for larger chains. A spectral
//! oracle, analytic convergence bounds, and a CLI benchmark harness around
//! transverse-field-Ising thermal probes sit on top.

pub mod bounds;
pub mod cli;
pub mod error;
pub mod lyapunov;
pub mod mpo;
pub mod operator;
pub mod oracle;
pub mod probes;

pub use error::{Error, Result};
pub use operator::{DenseOperator, SpectralDecomposition};
