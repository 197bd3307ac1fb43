//! Reconstruction of 2D absorption perturbations from time-resolved diffuse
//! optical measurements, using a sparse set of anisotropic Gaussian splats
//! fitted against a Born-linearized diffusion model.

pub mod error;
pub mod forward;
pub mod geometry;
pub mod inverse;
pub mod io;
pub mod metrics;
pub mod phantoms;
pub mod splats;

pub use error::{CacheError, Error, Result};
