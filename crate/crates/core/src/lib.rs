//! Staggered-grid simulation and decay-rate verification for a Timoshenko
//! beam coupled to heat conduction with second sound.

pub mod config;
pub mod decay;
pub mod diagnostics;
pub mod discretization;
pub mod error;
pub mod integrator;
pub mod linalg;
pub mod model;
pub mod quad;
pub mod resolvent;

pub use error::{Error, Result};
