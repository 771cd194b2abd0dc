pub mod analysis;
pub mod backend;
pub mod bench;
pub mod cli;
pub mod config;
pub mod container;
pub mod error;
pub mod linalg;
pub mod md;
pub mod memory;
pub mod model;
pub mod neighbor;
pub mod quant;
pub mod real;
pub mod segment;
pub mod synth;
pub mod traffic;
pub mod verify;

pub use error::{Error, Result};
pub use real::Real;
