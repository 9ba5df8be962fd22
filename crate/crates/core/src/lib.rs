//! Desk-scale acoustic-resolution photoacoustic microscopy simulator.

pub mod acoustics;
pub mod config;
pub mod analysis;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod optics;
pub mod phantom;
pub mod sensing;
pub mod signal;

pub use error::{Error, Result};
