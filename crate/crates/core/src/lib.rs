//! Simulated STM lattice images and convolutional autoencoders trained on
//! patches cut from them.

pub mod cli;
pub mod error;
pub mod eval;
pub mod io;
pub mod models;
pub mod nn;
pub mod noise;
pub mod patches;
pub mod rng;
pub mod sim;
pub mod train;

pub use error::{Error, Result};
