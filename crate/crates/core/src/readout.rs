//! Readouts that turn per-step outputs `O(t)` (`[T, B, C]`) into logits `[B, C]`.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::tensor::{Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Readout {
    /// `(1/T)·Σ_t O(t)`.
    Mean,
    /// `(1/T)·Σ_t sᵗ·O(t)` with learnable `sᵗ`.
    Quantized,
}

impl Readout {
    pub fn name(self) -> &'static str {
        match self {
            Readout::Mean => "mean",
            Readout::Quantized => "quantized",
        }
    }
}

/// Learnable per-step output weights `sᵗ`.
#[derive(Clone, Debug, PartialEq)]
pub struct TemporalWeights {
    pub s: Vec<f64>,
}

impl TemporalWeights {
    /// All ones: the quantized readout starts out equal to the mean readout.
    pub fn new(steps: usize) -> Self {
        Self { s: vec![1.0; steps] }
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_vec(self.s.clone())
    }
}

fn steps_of(tape: &Tape, outputs: Var) -> usize {
    tape.shape(outputs).first().copied().unwrap_or(0)
}

pub fn aggregate_mean(tape: &mut Tape, outputs: Var) -> Result<Var> {
    let steps = steps_of(tape, outputs);
    tape.time_weighted_sum(outputs, None, 1.0 / steps.max(1) as f64)
}

/// `weights` must be a length-`T` vector on the same tape.
pub fn aggregate_quantized(tape: &mut Tape, outputs: Var, weights: Var) -> Result<Var> {
    let steps = steps_of(tape, outputs);
    tape.time_weighted_sum(outputs, Some(weights), 1.0 / steps.max(1) as f64)
}

pub fn aggregate(tape: &mut Tape, readout: Readout, outputs: Var, weights: Option<Var>) -> Result<Var> {
    match (readout, weights) {
        (Readout::Quantized, Some(w)) => aggregate_quantized(tape, outputs, w),
        (Readout::Quantized, None) => Err(crate::Error::config("quantized readout needs temporal weights")),
        (Readout::Mean, _) => aggregate_mean(tape, outputs),
    }
}

pub fn cross_entropy(tape: &mut Tape, logits: Var, labels: &[usize]) -> Result<Var> {
    tape.cross_entropy(logits, labels)
}

/// Row-wise argmax of `[B, C]` logits; ties go to the lowest class.
pub fn predictions(logits: &Tensor) -> Vec<usize> {
    let classes = logits.shape().get(1).copied().unwrap_or(1);
    logits
        .data()
        .chunks(classes)
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                .0
        })
        .collect()
}
