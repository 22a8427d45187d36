//! Semiclassical propagation of a monochromatic Lagrangian state on the Bolza
//! surface under a weak random perturbation, and the statistics that compare the
//! locally rescaled wave with the Berry Gaussian random wave.

pub mod berry;
pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod field;
pub mod geometry;
pub mod lagrangian;
pub mod potential;
pub mod profile;
pub mod quad;
pub mod rng;
pub mod stats;
pub mod surface;
pub mod wkb;

pub use error::{Error, Result};
