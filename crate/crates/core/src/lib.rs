pub mod capacity;
pub mod cli;
pub mod config;
pub mod error;
pub mod exponents;
pub mod frac_space;
pub mod frac_time;
pub use error::{Error, Result};
pub mod quad;
pub mod simulator;
pub mod special;
pub mod transforms;
pub mod verify;
