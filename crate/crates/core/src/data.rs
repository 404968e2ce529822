//! Dataset ingestion: MNIST-style IDX files and CIFAR-10 binary batches.
//!
//! Pixels are kept as raw bytes and normalised to `[0, 1]` (divide by 255)
//! when a batch tensor is built.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
pub const CIFAR_RECORD_LEN: usize = 1 + 3 * 32 * 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Mnist,
    FashionMnist,
    Cifar10,
}

impl DatasetKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Mnist => "mnist",
            Self::FashionMnist => "fashion_mnist",
            Self::Cifar10 => "cifar10",
        }
    }

    /// `[C, H, W]` of one image.
    pub fn image_shape(self) -> [usize; 3] {
        match self {
            Self::Mnist | Self::FashionMnist => [1, 28, 28],
            Self::Cifar10 => [3, 32, 32],
        }
    }
}

impl std::str::FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mnist" => Ok(Self::Mnist),
            "fashion_mnist" | "fashion-mnist" => Ok(Self::FashionMnist),
            "cifar10" | "cifar-10" => Ok(Self::Cifar10),
            other => Err(Error::config(format!("unknown dataset '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Labelled images stored as raw bytes, channel-planar.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    shape: [usize; 3],
    pixels: Vec<u8>,
    labels: Vec<u8>,
    classes: usize,
}

impl Dataset {
    pub fn new(shape: [usize; 3], pixels: Vec<u8>, labels: Vec<u8>, classes: usize) -> Result<Self> {
        let size: usize = shape.iter().product();
        if size == 0 || pixels.len() != size * labels.len() {
            return Err(Error::data(format!(
                "{} pixel bytes do not hold {} images of {shape:?}",
                pixels.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= classes) {
            return Err(Error::data(format!("label {bad} out of range for {classes} classes")));
        }
        Ok(Self {
            shape,
            pixels,
            labels,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image_shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn label(&self, index: usize) -> usize {
        self.labels[index] as usize
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn raw_image(&self, index: usize) -> &[u8] {
        let size = self.image_size();
        &self.pixels[index * size..(index + 1) * size]
    }

    fn image_size(&self) -> usize {
        self.shape.iter().product()
    }

    /// Normalised `[C, H, W]` image.
    pub fn image(&self, index: usize) -> Result<Tensor> {
        if index >= self.len() {
            return Err(Error::Index {
                index,
                len: self.len(),
            });
        }
        let data = self.raw_image(index).iter().map(|&b| f64::from(b) / 255.0).collect();
        Tensor::new(self.shape.to_vec(), data)
    }

    /// Normalised `[B, C, H, W]` batch of the given items.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor, Vec<usize>)> {
        let size = self.image_size();
        let mut data = Vec::with_capacity(indices.len() * size);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::Index {
                    index: i,
                    len: self.len(),
                });
            }
            data.extend(self.raw_image(i).iter().map(|&b| f64::from(b) / 255.0));
            labels.push(self.label(i));
        }
        let shape = vec![indices.len(), self.shape[0], self.shape[1], self.shape[2]];
        Ok((Tensor::new(shape, data)?, labels))
    }

    /// The first `n` items (all of them if `n` exceeds the length).
    pub fn truncated(&self, n: usize) -> Self {
        let n = n.min(self.len());
        let size = self.image_size();
        Self {
            shape: self.shape,
            pixels: self.pixels[..n * size].to_vec(),
            labels: self.labels[..n].to_vec(),
            classes: self.classes,
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::data(format!("{}: truncated IDX header", path.display())))
}

/// Parses an IDX image file: magic `0x00000803`, count, rows, cols, then bytes.
pub fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<(usize, usize, usize, Vec<u8>)> {
    let magic = be_u32(bytes, 0, path)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::data(format!(
            "{}: bad image magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}",
            path.display()
        )));
    }
    let count = be_u32(bytes, 4, path)? as usize;
    let rows = be_u32(bytes, 8, path)? as usize;
    let cols = be_u32(bytes, 12, path)? as usize;
    let payload = &bytes[16..];
    let expected = count
        .checked_mul(rows)
        .and_then(|n| n.checked_mul(cols))
        .ok_or_else(|| Error::data(format!("{}: header sizes overflow", path.display())))?;
    if payload.len() != expected {
        return Err(Error::data(format!(
            "{}: image payload has {} bytes, header promises {expected}",
            path.display(),
            payload.len()
        )));
    }
    Ok((count, rows, cols, payload.to_vec()))
}

/// Parses an IDX label file: magic `0x00000801`, count, then bytes.
pub fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0, path)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::data(format!(
            "{}: bad label magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}",
            path.display()
        )));
    }
    let count = be_u32(bytes, 4, path)? as usize;
    let payload = &bytes[8..];
    if payload.len() != count {
        return Err(Error::data(format!(
            "{}: label payload has {} bytes, header promises {count}",
            path.display(),
            payload.len()
        )));
    }
    Ok(payload.to_vec())
}

fn idx_paths(dir: &Path, split: Split) -> (PathBuf, PathBuf) {
    let prefix = match split {
        Split::Train => "train",
        Split::Test => "t10k",
    };
    (
        dir.join(format!("{prefix}-images-idx3-ubyte")),
        dir.join(format!("{prefix}-labels-idx1-ubyte")),
    )
}

/// Loads one split of an MNIST-layout directory (MNIST or Fashion-MNIST).
pub fn load_idx_split(dir: &Path, split: Split) -> Result<Dataset> {
    let (img_path, lbl_path) = idx_paths(dir, split);
    let (count, rows, cols, pixels) = parse_idx_images(&read(&img_path)?, &img_path)?;
    let labels = parse_idx_labels(&read(&lbl_path)?, &lbl_path)?;
    if labels.len() != count {
        return Err(Error::data(format!(
            "{count} images but {} labels in {}",
            labels.len(),
            dir.display()
        )));
    }
    Dataset::new([1, rows, cols], pixels, labels, 10)
}

/// `(train, test)` from an MNIST-layout directory.
pub fn ingest_mnist(dir: &Path) -> Result<(Dataset, Dataset)> {
    Ok((load_idx_split(dir, Split::Train)?, load_idx_split(dir, Split::Test)?))
}

/// Parses CIFAR-10 binary records: one label byte then 3072 channel-planar pixels.
pub fn parse_cifar_batch(bytes: &[u8], path: &Path) -> Result<(Vec<u8>, Vec<u8>)> {
    if !bytes.len().is_multiple_of(CIFAR_RECORD_LEN) {
        return Err(Error::data(format!(
            "{}: length {} is not a multiple of {CIFAR_RECORD_LEN}",
            path.display(),
            bytes.len()
        )));
    }
    let n = bytes.len() / CIFAR_RECORD_LEN;
    let mut labels = Vec::with_capacity(n);
    let mut pixels = Vec::with_capacity(n * (CIFAR_RECORD_LEN - 1));
    for (i, rec) in bytes.chunks_exact(CIFAR_RECORD_LEN).enumerate() {
        if rec[0] >= 10 {
            return Err(Error::data(format!(
                "{}: record {i} has label {}",
                path.display(),
                rec[0]
            )));
        }
        labels.push(rec[0]);
        pixels.extend_from_slice(&rec[1..]);
    }
    Ok((labels, pixels))
}

fn cifar_dir(dir: &Path) -> PathBuf {
    let nested = dir.join("cifar-10-batches-bin");
    if nested.is_dir() {
        nested
    } else {
        dir.to_path_buf()
    }
}

pub fn load_cifar10_split(dir: &Path, split: Split) -> Result<Dataset> {
    let dir = cifar_dir(dir);
    let files: Vec<String> = match split {
        Split::Train => (1..=5).map(|i| format!("data_batch_{i}.bin")).collect(),
        Split::Test => vec!["test_batch.bin".to_string()],
    };
    let (mut labels, mut pixels) = (Vec::new(), Vec::new());
    for f in files {
        let path = dir.join(f);
        let (l, p) = parse_cifar_batch(&read(&path)?, &path)?;
        labels.extend(l);
        pixels.extend(p);
    }
    Dataset::new([3, 32, 32], pixels, labels, 10)
}

/// `(train, test)` from a CIFAR-10 binary directory.
pub fn ingest_cifar10(dir: &Path) -> Result<(Dataset, Dataset)> {
    Ok((load_cifar10_split(dir, Split::Train)?, load_cifar10_split(dir, Split::Test)?))
}

pub fn load_split(kind: DatasetKind, dir: &Path, split: Split) -> Result<Dataset> {
    match kind {
        DatasetKind::Mnist | DatasetKind::FashionMnist => load_idx_split(dir, split),
        DatasetKind::Cifar10 => load_cifar10_split(dir, split),
    }
}
