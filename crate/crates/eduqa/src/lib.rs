//! File formats, reports and the command-line driver for the `eduqa-core`
//! pipeline.

pub mod app;
pub mod artifacts;
pub mod binfmt;
pub mod cli;
pub mod config;
pub mod error;
pub mod external;
pub mod formats;
pub mod manifest;
pub mod report;

pub use error::{Error, Result};
