//! Finite-dimensional approximations of the Koopman operator from snapshot data.

#[cfg(feature = "cli")]
pub mod cli;
pub mod dataset;
pub mod dictionary;
pub mod dmd;
pub mod edmd;
pub mod error;
pub mod kernel_edmd;
pub mod model_file;
pub mod numerics;
pub mod pipeline;
pub mod spectral;
pub mod systems;

pub use error::{KoopmanError, Result};
