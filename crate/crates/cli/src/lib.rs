//! The lab pipeline: corpus generation, label extraction, model training,
//! threshold search, encoding and reporting. Each stage writes into its own
//! directory under the run's output path.

pub mod artifact;
pub mod config;
pub mod corpus;
pub mod error;
pub mod stages;
pub mod synth;

pub use config::RunConfig;
pub use error::{LabError, Result};
