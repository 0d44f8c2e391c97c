//! Storage formats, run configuration and the training/evaluation pipeline
//! built on top of `isv-core`.

pub mod binio;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod error;
pub mod featfile;
pub mod fsio;
pub mod pipeline;
pub mod report;
pub mod store;
pub mod text;
pub mod wav;

pub use error::{Error, Result};
