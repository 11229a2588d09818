pub mod boundaries;
pub mod cli;
pub mod error;
pub mod estimate;
pub mod model;
pub mod numerics;
pub mod stats;
pub mod sim;
pub mod testing;

pub use error::{Error, Result};
