//! Fiber tract microstructure, connectivity and shape measures, and the
//! cross-validated phenotype prediction pipeline built on them.

pub mod cnn;
pub mod error;
pub mod flatconf;
pub mod io;
pub mod linear;
pub mod measures;
pub mod normalize;
pub mod pipeline;
pub mod seed;
pub mod stats;
pub mod synth;
pub mod task;

pub use error::{Error, Result};
