#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use snnf_cli::config::ExperimentConfig;

fn idx_images(n: usize, pixels: &[u8]) -> Vec<u8> {
    let mut out = 0x0803u32.to_be_bytes().to_vec();
    for d in [n as u32, 28, 28] {
        out.extend(d.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

fn idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = 0x0801u32.to_be_bytes().to_vec();
    out.extend((labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Class `c` lights a 7×7 block in one of 16 grid cells, plus some noise.
fn synthetic(n: usize, offset: usize) -> (Vec<u8>, Vec<u8>) {
    let mut pixels = vec![0u8; n * 784];
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = (i + offset) % 4;
        labels.push(c as u8);
        let (by, bx) = (c / 2 * 14, c % 2 * 14);
        for y in 0..7 {
            for x in 0..7 {
                let jitter = ((i * 31 + y * 7 + x) % 5) as u8;
                pixels[i * 784 + (by + y + 3) * 28 + bx + x + 3] = 200 + jitter * 10;
            }
        }
        pixels[i * 784 + (i * 13) % 784] = 90;
    }
    (pixels, labels)
}

/// Writes a small four-class MNIST-layout dataset into `dir`.
pub fn write_dataset(dir: &Path, train: usize, test: usize) {
    fs::create_dir_all(dir).unwrap();
    for (prefix, n, offset) in [("train", train, 0), ("t10k", test, 1)] {
        let (pixels, labels) = synthetic(n, offset);
        fs::write(dir.join(format!("{prefix}-images-idx3-ubyte")), idx_images(n, &pixels)).unwrap();
        fs::write(dir.join(format!("{prefix}-labels-idx1-ubyte")), idx_labels(&labels)).unwrap();
    }
}

/// A quick config over the synthetic data: one pooled conv layer straight into the head.
pub fn config_text(data: &Path, out: &Path) -> String {
    format!(
        r#"
dataset = "mnist"
data_dir = "{}"
epochs = 2
batch_size = 16
learning_rate = 0.01
optimizer = "adam"
seed = 11
output_dir = "{}"

[network]
readout = "quantized"
fc_sizes = []
conv_blocks = []

[network.stem]
out_channels = 4
kernel = 5
pool = 4

[network.neuron]
kind = "ulif"
reset = "soft"
time_wise = true

[network.encoder]
scheme = "hybrid_ttfs"
total_steps = 3
"#,
        data.display(),
        out.display()
    )
}

pub fn config(data: &Path, out: &Path) -> ExperimentConfig {
    ExperimentConfig::from_toml(&config_text(data, out)).unwrap()
}

pub struct Fixture {
    pub dir: tempfile::TempDir,
}

impl Fixture {
    pub fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&dir.path().join("data"), 96, 48);
        Self { dir }
    }

    pub fn data(&self) -> PathBuf {
        self.dir.path().join("data")
    }

    pub fn path(&self, p: &str) -> PathBuf {
        self.dir.path().join(p)
    }
}
