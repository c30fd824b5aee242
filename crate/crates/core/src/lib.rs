//! Per-cell extreme-value analysis of weather ensembles.

pub mod compare;
pub mod config;
pub mod error;
pub mod extremes;
pub mod gev;
pub mod grid;
pub mod heatindex;
pub mod ingest;
pub mod pipeline;
pub mod report;
pub mod rng;

pub use error::{Error, Result};
