pub mod cli;
pub mod config;
pub mod engine;
pub mod error;
pub mod generator;
pub mod harness;
pub mod levy;
pub mod model;
pub mod quad;
pub mod rng;
pub mod stable;
pub mod stats;

pub use error::{Error, Result};
