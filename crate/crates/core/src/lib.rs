pub mod bayes_head;
pub mod cli;
pub mod encoder;
pub mod error;
pub mod fusion;
pub mod ingest;
pub mod metrics;
pub mod mil;
pub mod pipeline;
pub mod rng;
pub mod series;

pub use error::{Error, Result};
