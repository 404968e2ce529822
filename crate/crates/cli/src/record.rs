//! Run records, stored one JSON object per line.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use snnf_core::{Error, Result};

use crate::config::ExperimentConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// One-based.
    pub epoch: usize,
    pub learning_rate: f64,
    pub train_loss: f64,
    pub train_accuracy: f64,
    #[serde(default)]
    pub test_loss: Option<f64>,
    #[serde(default)]
    pub test_accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "lowercase")]
pub enum RunStatus {
    Completed,
    Failed { step: Option<usize>, message: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub config: ExperimentConfig,
    /// Neuron, readout and encoder, e.g. `ULIF+TW/quantized/hybrid_ttfs`.
    pub variant: String,
    /// Ablation cell id, when produced by a matrix run.
    #[serde(default)]
    pub cell: Option<String>,
    pub steps: usize,
    pub seed: u64,
    pub status: RunStatus,
    pub epochs: Vec<EpochRecord>,
    /// Test metrics after the last completed epoch (untrained when `epochs = 0`).
    pub final_test_accuracy: Option<f64>,
    pub final_test_loss: Option<f64>,
    pub per_class_accuracy: Vec<f64>,
    pub spike_rates: Vec<f64>,
    /// Learned `sᵗ` of the quantized readout.
    pub temporal_weights: Option<Vec<f64>>,
    pub wall_time_s: f64,
}

impl RunRecord {
    pub fn completed(&self) -> bool {
        self.status == RunStatus::Completed
    }

    /// Everything except wall time, serialised; equal streams mean identical runs.
    pub fn metric_stream(&self) -> String {
        let mut r = self.clone();
        r.wall_time_s = 0.0;
        serde_json::to_string(&r).expect("record serialises")
    }
}

pub fn append_record(path: &Path, record: &RunRecord) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    let line = serde_json::to_string(record).map_err(|e| Error::Data(format!("record: {e}")))?;
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
    writeln!(f, "{line}").map_err(io)
}

/// Reads every record of a JSON-lines file; a torn final line (interrupted write) is skipped.
pub fn read_records(path: &Path) -> Result<Vec<RunRecord>> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    let mut out = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        match serde_json::from_str(line) {
            Ok(r) => out.push(r),
            Err(_) if i + 1 == lines.len() && !text.ends_with('\n') => {}
            Err(e) => {
                return Err(Error::Data(format!("{}:{}: {e}", path.display(), i + 1)));
            }
        }
    }
    Ok(out)
}
