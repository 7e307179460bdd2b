//! Learned pilot design and neural support recovery for sparse complex
//! signals, with classical LASSO/AMP baselines and an experiment harness.

pub mod autoencoder;
pub mod baselines;
pub mod datagen;
pub mod error;
pub mod harness;
pub mod model;
pub mod threshold;

pub use error::{Error, Result};
