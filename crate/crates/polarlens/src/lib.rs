//! File formats, network clients, the pipeline runner and the CLI around
//! `polarlens-core`.

pub mod analyses;
pub mod config;
pub mod embfile;
pub mod fetch;
pub mod http;
pub mod io;
pub mod pipeline;
pub mod report;
pub mod scorer;
pub mod train;

pub use config::{Analysis, RunConfig};
pub use pipeline::{run_pipeline, RunManifest};
