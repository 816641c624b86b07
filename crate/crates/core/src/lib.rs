//! Statistical mechanics of log and Coulomb gases: energies, equilibrium
//! measures, Gibbs sampling with random-matrix oracles, fluctuation
//! statistics, periodic jellium energies and partition functions.

pub mod cli;
pub mod energy;
pub mod equilibrium;
pub mod error;
pub mod fluctstats;
pub mod jellium;
pub mod kernel;
pub mod quad;
pub mod sampler;
pub mod thermo;
pub mod verify;

pub use error::{Error, Result};
