//! Finite-element solver for incompressible MHD in Elsässer variables.

pub mod adapt;
pub mod baseline;
pub mod diagnostics;
pub mod error;
pub mod forms;
pub mod linsolve;
pub mod mesh;
pub mod problems;
pub mod quadrature;
pub mod runner;
pub mod space;
pub mod sparse;
pub mod stepper;

pub use error::{Error, Result};
