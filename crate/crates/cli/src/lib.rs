//! Ingestion, run configuration, orchestration and reports for
//! rate-mixture Weibull AFT models.

pub mod config;
pub mod dataset;
pub mod diagnostics;
pub mod orchestrate;
pub mod report;
pub mod simulate;

pub use config::{RunConfig, Track};
pub use dataset::{load_dataset, LoadedDataset, Schema};
pub use diagnostics::{km_and_cloglog, DiagnosticSeries};
pub use orchestrate::{orchestrate, RunOptions, RunResults};
pub use report::export_report;
