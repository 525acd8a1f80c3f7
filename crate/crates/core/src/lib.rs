//! Individual-level behavioral indicators from accelerometer and GPS data.

pub mod error;
pub mod evaluation;
pub mod features;
pub mod filter;
pub mod ingest;
pub mod labels;
pub mod mobility;
pub mod pipelines;
pub mod profiles;
pub mod signal;
pub mod steps;
pub mod svm;
pub mod synth;

pub use error::{Error, Result};
