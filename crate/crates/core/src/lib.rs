pub mod analysis;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod grid;
pub mod kernel;
pub mod operator;
pub mod sim;
pub mod util;

pub use error::{Error, Result};
