pub mod error;
mod spectral;
pub mod torus_field;
pub mod signal;
pub mod cell;
pub mod effective;
pub mod kinetics;
pub mod stability;
pub mod slow;
pub mod correction;
pub mod direct;
pub mod selftest;
pub mod config;
pub mod pipeline;

pub use error::{Error, Result};
