//! File formats, checkpoints, heat maps and the command-line front end for
//! [`maskpar_core`].

pub mod checkpoint;
pub mod cli;
mod error;
pub mod heatmap;
pub mod manifest;
pub mod png;
pub mod policies;
pub mod report;
pub mod run;
pub mod synth;

pub use error::{Error, Result};
