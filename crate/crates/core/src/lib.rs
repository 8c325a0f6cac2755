//! Monte Carlo certification of quantum states and processes without
//! tomography, plus learning of local Hamiltonians from short-time dynamics.

pub mod cv;
pub mod dense;
pub mod error;
pub mod fidelity;
pub mod hamiltonian;
pub mod measure;
pub mod mps;
pub mod pauli;
pub mod process;
pub mod rng;
pub mod sampler;
pub mod stabilizer;
pub mod state;

pub use error::{Error, Result};

/// Complex scalar used throughout.
pub type C64 = nalgebra::Complex<f64>;
