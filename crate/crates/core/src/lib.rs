//! Dynamic offense/defense strength model for association football.

pub mod baselines;
pub mod error;
pub mod graph;
pub mod harness;
pub mod ingest;
pub mod model;
pub mod posterior;
pub mod predict;
pub mod schedule;
pub mod train;

pub use error::{Error, Result};
