//! Automated prompt engineering for open-vocabulary segmentation, and a
//! simulated UAV safe-landing loop built on top of it.

pub mod backend;
pub mod cli;
pub mod config;
pub mod embedding;
pub mod error;
pub mod fusion;
pub mod metrics;
pub mod policy;
pub mod prompt;
pub mod scene;
pub mod sim;
pub mod vocab;

pub use error::{Error, Result};
