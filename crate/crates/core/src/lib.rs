pub mod analysis;
pub mod capsnet;
pub mod cli;
pub mod error;
pub mod features;
pub mod numerics;
pub mod robustness;
pub mod synthetic;
pub mod trainer;

pub use error::{Error, Result};
