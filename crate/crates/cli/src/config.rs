//! Experiment configuration files (TOML) and their canonical hash.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use snnf_core::data::DatasetKind;
use snnf_core::encoders::EncoderConfig;
use snnf_core::network::{ConvBlock, NetworkSpec, OptimizerConfig, OptimizerKind};
use snnf_core::neurons::NeuronConfig;
use snnf_core::readout::Readout;
use snnf_core::{Error, Result};

pub const DATA_DIR_ENV: &str = "SNNF_DATA_DIR";

/// TOML integers are signed 64-bit, so seeds stay below 2^63.
pub const MAX_SEED: u64 = i64::MAX as u64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub neuron: NeuronConfig,
    pub encoder: EncoderConfig,
    pub readout: Readout,
    /// Overrides the LeNet stem when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stem: Option<ConvBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conv_blocks: Option<Vec<ConvBlock>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fc_sizes: Option<Vec<usize>>,
}

impl NetworkConfig {
    pub fn spec(&self, dataset: DatasetKind) -> NetworkSpec {
        let mut spec = NetworkSpec::lenet(
            dataset.image_shape(),
            10,
            self.neuron.clone(),
            self.encoder.clone(),
            self.readout,
        );
        if let Some(stem) = &self.stem {
            spec.stem = stem.clone();
        }
        if let Some(blocks) = &self.conv_blocks {
            spec.conv_blocks = blocks.clone();
        }
        if let Some(fc) = &self.fc_sizes {
            spec.fc_sizes = fc.clone();
        }
        spec
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Cosine decay from `learning_rate` to zero over all epochs, stepped per epoch.
    Cosine,
}

fn default_batch_size() -> usize {
    64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetKind,
    /// Falls back to `$SNNF_DATA_DIR/<dataset>` and then `$SNNF_DATA_DIR` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_dir: Option<PathBuf>,
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    #[serde(default)]
    pub lr_schedule: LrSchedule,
    #[serde(default)]
    pub weight_decay: f64,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Train on the first `n` training images only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_limit: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_limit: Option<usize>,
    pub network: NetworkConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seed > MAX_SEED {
            return Err(Error::Config(format!("seed must be at most {MAX_SEED}")));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        self.optimizer_config().validate()?;
        self.network.neuron.validate()?;
        self.network.encoder.validate()?;
        Ok(())
    }

    /// Canonical text: the TOML serialisation of the parsed config.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serialises to TOML")
    }

    pub fn hash(&self) -> [u8; 32] {
        Sha256::digest(self.canonical().as_bytes()).into()
    }

    pub fn hash_hex(&self) -> String {
        hex(&self.hash())
    }

    pub fn spec(&self) -> NetworkSpec {
        self.network.spec(self.dataset)
    }

    pub fn optimizer_config(&self) -> OptimizerConfig {
        let mut c = match self.optimizer {
            OptimizerKind::Sgd => OptimizerConfig::sgd(self.learning_rate),
            OptimizerKind::Adam => OptimizerConfig::adam(self.learning_rate),
        };
        c.weight_decay = self.weight_decay;
        c
    }

    /// Learning rate for zero-based `epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        match self.lr_schedule {
            LrSchedule::Constant => self.learning_rate,
            LrSchedule::Cosine => {
                let frac = epoch as f64 / self.epochs.max(1) as f64;
                0.5 * self.learning_rate * (1.0 + (std::f64::consts::PI * frac).cos())
            }
        }
    }

    /// `data_dir`, else `$SNNF_DATA_DIR/<dataset>` if it exists, else `$SNNF_DATA_DIR`.
    pub fn resolve_data_dir(&self) -> Result<PathBuf> {
        resolve_data_dir(self.data_dir.as_deref(), self.dataset)
    }
}

pub fn resolve_data_dir(explicit: Option<&Path>, dataset: DatasetKind) -> Result<PathBuf> {
    if let Some(dir) = explicit {
        return Ok(dir.to_path_buf());
    }
    let root = std::env::var_os(DATA_DIR_ENV)
        .map(PathBuf::from)
        .ok_or_else(|| Error::Config(format!("no data_dir given and {DATA_DIR_ENV} is not set")))?;
    let nested = root.join(dataset.name());
    Ok(if nested.is_dir() { nested } else { root })
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
