//! Positional mechanics: particles on piecewise-ballistic paths with
//! Poisson-timed velocity jumps, tuned so ensembles track Schrodinger
//! statistics, plus the hydrodynamic, kinetic and 1+1D relativistic layers.

pub mod error;
pub mod grid;
pub mod jumpkernel;
pub mod kinetics;
pub mod madelung;
pub mod pathsim;
pub mod relativity;
pub mod rng;
pub mod stats;
pub mod wavefield;

pub use error::{Error, Result};
pub use grid::GridSpec;
