//! Simulation of damped pressure waves in a pipe and identification of the
//! friction law `a(u)` from boundary pressure-drop measurements.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod discretization;
pub mod error;
pub mod experiments;
pub mod inversion;
pub mod io;
pub mod linalg;
pub mod measurement;
pub mod parameter;
pub mod sensitivity;
pub mod stationary;

pub use error::{Error, Result};
