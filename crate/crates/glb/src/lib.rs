//! Experiment harness for `glb-core`: configuration, runs and resume,
//! file formats, the invariant suite and the `glb` command line.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod io;
pub mod manifest;
pub mod run;
pub mod verify;

pub use config::{ExperimentConfig, Kind};
pub use error::{HarnessError, Result};
pub use manifest::Manifest;
pub use run::{resume, run, RunOutcome};
