//! Synthetic cohorts, dataset files, the end-to-end pipeline, evaluation,
//! the HTTP API and the `gaitlens` command line.

pub mod api;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod evaluate;
pub mod pipeline;
pub mod plot;
pub mod synth;

pub use api::{router, serve, ApiState, ServerHandle};
pub use config::RunConfig;
pub use dataset::{load_dataset, save_dataset, ClassificationOverride, Dataset};
pub use error::{Result, ServiceError};
pub use pipeline::{run_pipeline, ModelSource, ServedState};
pub use synth::{generate_synthetic_dataset, SyntheticConfig};
