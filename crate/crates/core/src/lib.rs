//! Density-matrix simulation of a sensor spin, an ancilla memory and a
//! small bath of sample spins under pulsed sensing sequences.

pub mod cli;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod io;
pub mod sequences;
pub mod spin;

pub use error::{Error, Result};
