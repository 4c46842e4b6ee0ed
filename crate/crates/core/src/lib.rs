pub mod audio;
pub mod cli;
pub mod augment;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod features;
pub mod model;
pub mod pipeline;
pub mod nn;
mod spectral;

pub use error::{Error, Result};
