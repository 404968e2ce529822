//! Train-and-evaluate runs.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use snnf_core::data::{load_split, Dataset, Split};
use snnf_core::network::{
    evaluate, load_checkpoint, save_checkpoint, train_epoch, Checkpoint, Evaluation, Network, Optimizer,
};
use snnf_core::neurons::NeuronKind;
use snnf_core::{derive_seed, Error, Result};

use crate::config::{hex, ExperimentConfig};
use crate::record::{EpochRecord, RunRecord, RunStatus};

pub const CHECKPOINT_FILE: &str = "checkpoint.snnf";
pub const CONFIG_FILE: &str = "config.toml";
pub const RECORDS_FILE: &str = "records.jsonl";
const EVAL_BATCH: usize = 500;

/// `LIF`, `PLIF+TW`, ... for a neuron configuration.
pub fn neuron_label(kind: NeuronKind, time_wise: bool) -> String {
    let base = match kind {
        NeuronKind::If => "IF",
        NeuronKind::Lif => "LIF",
        NeuronKind::Plif => "PLIF",
        NeuronKind::Ulif => "ULIF",
    };
    let learnable = matches!(kind, NeuronKind::Plif | NeuronKind::Ulif);
    if time_wise && learnable {
        format!("{base}+TW")
    } else {
        base.to_string()
    }
}

pub fn variant_label(config: &ExperimentConfig) -> String {
    let n = &config.network;
    format!(
        "{}/{}/{}",
        neuron_label(n.neuron.kind, n.neuron.time_wise),
        n.readout.name(),
        n.encoder.scheme.name()
    )
}

pub fn load_datasets(config: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    let dir = config.resolve_data_dir()?;
    let mut train = load_split(config.dataset, &dir, Split::Train)?;
    let mut test = load_split(config.dataset, &dir, Split::Test)?;
    if let Some(n) = config.train_limit {
        train = train.truncated(n);
    }
    if let Some(n) = config.test_limit {
        test = test.truncated(n);
    }
    Ok((train, test))
}

/// Options that shape a run without changing its configuration.
#[derive(Clone, Debug)]
pub struct RunOptions {
    /// Evaluate on the test set after every epoch, not only the last.
    pub eval_each_epoch: bool,
    /// Where checkpoint and config are written; defaults to the config's `output_dir`.
    pub output_dir: Option<PathBuf>,
    pub cell: Option<String>,
    pub verbose: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            eval_each_epoch: true,
            output_dir: None,
            cell: None,
            verbose: false,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Trains per `config`, writes the final checkpoint and canonical config, and
/// returns the record. Training failures end up in the record's status; setup
/// problems (bad config, unwritable output) are errors.
pub fn run_with_data(config: &ExperimentConfig, train: &Dataset, test: &Dataset, opts: &RunOptions) -> Result<RunRecord> {
    config.validate()?;
    let start = Instant::now();
    let out_dir = opts.output_dir.clone().unwrap_or_else(|| config.output_dir.clone());
    fs::create_dir_all(&out_dir).map_err(io_err(&out_dir))?;
    let spec = config.spec();
    let mut net = Network::build(&spec, config.seed)?;
    let mut opt = Optimizer::new(config.optimizer_config(), net.params())?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "shuffle"));
    let mut record = RunRecord {
        config_hash: config.hash_hex(),
        config: config.clone(),
        variant: variant_label(config),
        cell: opts.cell.clone(),
        steps: spec.steps(),
        seed: config.seed,
        status: RunStatus::Completed,
        epochs: Vec::new(),
        final_test_accuracy: None,
        final_test_loss: None,
        per_class_accuracy: Vec::new(),
        spike_rates: Vec::new(),
        temporal_weights: None,
        wall_time_s: 0.0,
    };
    let mut last_eval: Option<Evaluation> = None;
    for epoch in 0..config.epochs {
        opt.lr = config.lr_at(epoch);
        let metrics = match train_epoch(&mut net, train, &mut opt, &mut rng, config.batch_size) {
            Ok(m) => m,
            Err(e) => {
                let step = match e {
                    Error::NonFinite { step } => Some(step),
                    _ => None,
                };
                record.status = RunStatus::Failed {
                    step,
                    message: e.to_string(),
                };
                break;
            }
        };
        let mut rec = EpochRecord {
            epoch: epoch + 1,
            learning_rate: opt.lr,
            train_loss: metrics.loss,
            train_accuracy: metrics.accuracy,
            test_loss: None,
            test_accuracy: None,
        };
        if opts.eval_each_epoch || epoch + 1 == config.epochs {
            let e = evaluate(&net, test, EVAL_BATCH)?;
            rec.test_loss = Some(e.loss);
            rec.test_accuracy = Some(e.accuracy);
            last_eval = Some(e);
        }
        if opts.verbose {
            eprintln!(
                "epoch {}: loss {:.4} train acc {:.4} test acc {} ({:.0}s)",
                rec.epoch,
                rec.train_loss,
                rec.train_accuracy,
                rec.test_accuracy.map_or("-".into(), |a| format!("{a:.4}")),
                start.elapsed().as_secs_f64()
            );
        }
        record.epochs.push(rec);
    }
    if config.epochs == 0 || (last_eval.is_none() && !record.epochs.is_empty()) {
        last_eval = Some(evaluate(&net, test, EVAL_BATCH)?);
    }
    if let Some(e) = last_eval {
        record.final_test_accuracy = Some(e.accuracy);
        record.final_test_loss = Some(e.loss);
        record.per_class_accuracy = e.per_class;
        record.spike_rates = e.spike_rates;
    }
    record.temporal_weights = net.temporal_weights();
    let ck = Checkpoint::capture(&net, Some(&opt), record.epochs.len(), config.seed, config.hash());
    save_checkpoint(&out_dir.join(CHECKPOINT_FILE), &ck)?;
    let cfg_path = out_dir.join(CONFIG_FILE);
    fs::write(&cfg_path, config.canonical()).map_err(io_err(&cfg_path))?;
    record.wall_time_s = start.elapsed().as_secs_f64();
    Ok(record)
}

pub fn run(config: &ExperimentConfig, opts: &RunOptions) -> Result<RunRecord> {
    let (train, test) = load_datasets(config)?;
    run_with_data(config, &train, &test, opts)
}

/// Loads a checkpoint together with the `config.toml` saved beside it, checking the hash.
pub fn restore(checkpoint: &Path) -> Result<(ExperimentConfig, Network, Checkpoint)> {
    let ck = load_checkpoint(checkpoint)?;
    let cfg_path = checkpoint.parent().unwrap_or(Path::new(".")).join(CONFIG_FILE);
    let config = ExperimentConfig::load(&cfg_path)?;
    if config.hash() != ck.config_hash {
        return Err(Error::Checkpoint(format!(
            "config hash mismatch: {} has {}, checkpoint expects {}",
            cfg_path.display(),
            config.hash_hex(),
            hex(&ck.config_hash)
        )));
    }
    let mut net = Network::build(&config.spec(), ck.seed)?;
    net.load_params(&ck.params)?;
    Ok((config, net, ck))
}
