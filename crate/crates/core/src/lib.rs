//! Random walk cover times on planar lattice domains, together with the
//! Gaussian free field, exact Green-function computations and the
//! one-dimensional local-time laws used to study them.

pub mod coupling;
pub mod error;
pub mod exact;
pub mod experiments;
pub mod gff;
pub mod lattice;
pub mod onedim;
pub mod rng;
pub mod sparse;
pub mod stats;
pub mod walk;

pub use error::{Error, Result};
