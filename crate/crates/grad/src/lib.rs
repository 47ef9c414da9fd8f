//! File formats, model storage, experiment orchestration and the command-line
//! front end for [`grad_core`].

#![forbid(unsafe_code)]

pub mod bench;
pub mod bundle;
pub mod cli;
pub mod config;
pub mod error;
pub mod experiment;
pub mod io;
pub mod model_file;

pub use error::{Error, Result};
