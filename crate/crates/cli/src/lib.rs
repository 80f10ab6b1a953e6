//! Batch front end for the coupled phase-separation / damage solver:
//! configuration parsing, single certified runs, and refinement sweeps.

pub mod config;
pub mod runner;
pub mod sweep;

pub use config::{parse_config, ConfigErrors, RawConfig, RunConfig};
pub use runner::{execute, run, RunArtifacts};
pub use sweep::{sweep, SweepAxis, SweepReport};
