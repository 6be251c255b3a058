//! Simulation and exact algebra for polynomial functionals of Hermite-driven moving averages.

pub mod cli;
pub mod combinatorics;
pub mod constants;
pub mod error;
pub mod functionals;
pub mod hermite;
pub mod power_counting;
pub mod process;
pub mod quadrature;
pub mod stats;

pub use error::{Error, Result};
