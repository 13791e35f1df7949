//! Implicit Fourier neural operators that map boundary displacements of a
//! planar tissue specimen to the full displacement field, with data tooling
//! and a Fung-type finite-element baseline.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod fung;
pub mod grid;
pub mod ifno;
pub mod linalg;
pub mod spectral;
pub mod study;
pub mod train;

pub use error::{Error, Result};
