//! File formats, run configuration, plotting and the command line.

pub mod cli;
mod config;
mod dataset;
mod lock;
pub mod plot;

pub use config::{RunConfig, PRESETS};
pub use dataset::{generate_to_file, read_dataset, sidecar_path, write_dataset, DatasetWriter, Sidecar, MAGIC};
pub use lock::DirLock;
