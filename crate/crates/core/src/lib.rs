//! Simulation of shape memory alloy wires: a hybrid dynamical model and the
//! stiff free-energy baseline it reformulates.

pub mod compare;
pub mod constitutive;
pub mod mas;
pub mod memory;
pub mod error;
pub mod hybrid;
pub mod identification;
pub mod params;
pub mod rk;
pub mod rosenbrock;
pub mod scenario;
pub mod solver;
pub mod signal;

pub use error::{Error, Result};
pub use params::MaterialParams;
