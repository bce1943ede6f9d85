//! Pure kernels for scoring the academic quality of video corpora.
//!
//! The pipeline retrieves topic-relevant videos (lexical BM25 or a trainable
//! dual encoder), reads each retrieved transcript/caption text with an
//! extractive reader, maps the extracted answer onto a multiple-choice option
//! and aggregates correctness into per-video and per-channel scores.
//!
//! This crate is `no_std` and only needs `alloc`. File formats, the CLI and
//! the subprocess reader adapter live in the `eduqa` crate.

#![no_std]
#![deny(rust_2018_idioms)]

extern crate alloc;

pub mod choice;
pub mod corpus;
pub mod error;
pub mod linalg;
pub mod reader;
pub mod retrieval;
pub mod scoring;
pub mod text;

mod rng;

pub use error::{Error, Result};
