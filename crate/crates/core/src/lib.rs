//! Spiking neural network toolkit: tensors with reverse-mode autodiff, neuron
//! models, spike encoders, readouts, LeNet-style networks and a single-neuron lab.

pub mod data;
pub mod dynamics;
pub mod encoders;
pub mod error;
pub mod network;
pub mod neurons;
pub mod plot;
pub mod readout;
pub mod tensor;

pub use error::{Error, Result};

use sha2::{Digest, Sha256};

/// Derives an independent 64-bit seed from a base seed and a label.
pub fn derive_seed(base: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    h.update(label.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}
