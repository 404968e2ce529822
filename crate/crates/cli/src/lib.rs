//! Experiment plumbing behind the `snnf` binary: configs, runs, ablation matrices and reports.

pub mod ablation;
pub mod config;
pub mod experiment;
pub mod raster;
pub mod record;
pub mod report;
pub mod sim;

use snnf_core::Error;

/// Process exit code for an error: 1 usage, 2 data, 3 numeric failure.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NonFinite { .. } => 3,
        Error::Data(_) | Error::Io { .. } | Error::Checkpoint(_) => 2,
        _ => 1,
    }
}
