//! Configuration, initial data and file formats.

pub mod config;
pub mod csv;
pub mod initial;
pub mod snapshot;
