//! Symbolic-regression network for identifying ordinary differential
//! equations from noisy state and derivative samples.

pub mod autodiff;
pub mod config;
pub mod error;
pub mod expr;
pub mod io;
pub mod loss;
pub mod network;
pub mod pipeline;
pub mod select;
pub mod systems;
pub mod train;

pub use error::{Error, Result};
