//! File formats, configuration, the end-to-end pipeline and report emission
//! for `gnnx-core`.

pub mod config;
pub mod io;
pub mod pipeline;
pub mod report;

pub use config::RunConfig;
pub use pipeline::{run_pipeline, Stage, StageError};
pub use report::EvalReport;
