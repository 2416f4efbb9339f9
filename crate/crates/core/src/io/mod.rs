//! Configuration files, run execution and result files.

mod config;
mod output;
mod run;

pub use config::*;
pub use output::*;
pub use run::*;
