#[cfg(feature = "cli")]
pub mod cli;
pub mod dynamics;
pub mod ergodic_set;
pub mod error;
pub mod hj;
pub mod hilbert;
pub mod matrices;
pub mod models;
pub mod sampling;
pub mod spectral_derivatives;

pub use error::{Error, Result};
