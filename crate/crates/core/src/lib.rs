//! Pseudospectral simulator and invariant auditor for the nonlocal
//! Cahn-Hilliard-Navier-Stokes system on the periodic square.

// `!(x > 0.0)` is deliberate throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod hypotheses;
pub mod io;
pub mod kernel;
pub mod potential;
pub mod run;
pub mod solver;
pub mod spectral;

pub use error::{Error, Result};
