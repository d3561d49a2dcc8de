//! Configuration, run orchestration, residual reports and artifact export.

pub mod config;
pub mod export;
pub mod report;
pub mod run;

pub use config::RunConfig;
pub use export::{export_series, export_spectra, shell_spectrum, SavedFlow};
pub use report::{lei_check, refinement, residual_row, LeiSummary, Refinement, ResidualRow};
pub use run::{check, run, RunSummary};
