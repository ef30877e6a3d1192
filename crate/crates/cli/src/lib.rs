//! Orchestration behind the `z2perc` binary: manifests, grid runs, snapshot
//! files, percolation reports and series analysis.

pub mod analyze;
pub mod error;
pub mod manifest;
pub mod percolate;
pub mod run;
pub mod snapshot;

pub use error::{CliError, Result};
pub use manifest::Manifest;
pub use snapshot::SnapshotFile;
