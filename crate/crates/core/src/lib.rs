//! Measurement-and-feedback models of Newtonian gravity.
//!
//! Gravity between trapped masses is replaced by continuous position
//! measurements whose records drive feedback Hamiltonians. The crate holds
//! the numerical machinery for those models: truncated Fock operators,
//! stochastic unravelings, master equations with moment oracles, model
//! builders and radial kernel algebra.
//!
//! The crate is `no_std` (with `alloc`); the `std` feature only forwards to
//! the dependencies.
#![no_std]

extern crate alloc;

mod prelude;

pub mod analysis;
pub mod error;
pub mod hilbert;
pub mod kernels;
pub mod linalg;
pub mod master;
pub mod models;
pub mod ode;
pub mod quadrature;
pub mod stochastic;

pub use error::{Error, Result, Warning};
pub use hilbert::{DensityOperator, HilbertSpec, Mode, Operator, StateVector};
pub use linalg::C64;
pub use stochastic::ProtocolSpec;
