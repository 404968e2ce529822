//! Matrix runner: neuron × readout × encoder × T × seed, with resume.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use snnf_core::data::Dataset;
use snnf_core::encoders::EncodingScheme;
use snnf_core::neurons::NeuronKind;
use snnf_core::readout::Readout;
use snnf_core::{derive_seed, Error, Result};

use crate::config::{ExperimentConfig, MAX_SEED};
use crate::experiment::{load_datasets, neuron_label, run_with_data, RunOptions, RECORDS_FILE};
use crate::record::{append_record, read_records, RunRecord, RunStatus};
use crate::report;

/// A neuron kind with or without time-wise parameters, written `ulif`, `ulif+tw`, ...
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NeuronVariant {
    pub kind: NeuronKind,
    pub time_wise: bool,
}

impl NeuronVariant {
    pub fn label(self) -> String {
        neuron_label(self.kind, self.time_wise)
    }
}

impl std::str::FromStr for NeuronVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        let (kind, time_wise) = match lower.split_once(['+', '_']) {
            Some((k, "tw")) => (k, true),
            Some(_) => return Err(Error::Config(format!("unknown neuron variant '{s}'"))),
            None => (lower.as_str(), false),
        };
        Ok(Self {
            kind: kind.parse()?,
            time_wise,
        })
    }
}

impl Serialize for NeuronVariant {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.label().to_ascii_lowercase())
    }
}

impl<'de> Deserialize<'de> for NeuronVariant {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn default_seeds() -> usize {
    1
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixSpec {
    pub output_dir: PathBuf,
    pub neurons: Vec<NeuronVariant>,
    pub readouts: Vec<Readout>,
    pub encoders: Vec<EncodingScheme>,
    pub steps: Vec<usize>,
    /// Seeds per cell, derived from the base seed.
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    #[serde(default = "default_true")]
    pub eval_each_epoch: bool,
    pub base: ExperimentConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub id: String,
    pub variant: String,
    pub steps: usize,
    pub config: ExperimentConfig,
}

impl MatrixSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let m: Self = toml::from_str(text).map_err(|e| Error::Config(format!("matrix: {e}")))?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.neurons.is_empty() || self.readouts.is_empty() || self.encoders.is_empty() || self.steps.is_empty() {
            return Err(Error::Config("every matrix axis needs at least one entry".into()));
        }
        if self.seeds == 0 {
            return Err(Error::Config("seeds must be positive".into()));
        }
        self.cells().iter().try_for_each(|c| c.config.validate())
    }

    /// Variant labels in table-row order.
    pub fn variants(&self) -> Vec<String> {
        let mut out = Vec::new();
        for n in &self.neurons {
            for r in &self.readouts {
                for e in &self.encoders {
                    out.push(format!("{}/{}/{}", n.label(), r.name(), e.name()));
                }
            }
        }
        out
    }

    /// The full cross product, in a fixed order.
    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        for n in &self.neurons {
            for &r in &self.readouts {
                for &e in &self.encoders {
                    for &t in &self.steps {
                        for k in 0..self.seeds {
                            let variant = format!("{}/{}/{}", n.label(), r.name(), e.name());
                            let id = format!(
                                "{}-{}-{}-T{t}-s{k}",
                                n.label().to_ascii_lowercase().replace('+', "_"),
                                r.name(),
                                e.name()
                            );
                            let mut c = self.base.clone();
                            c.network.neuron.kind = n.kind;
                            c.network.neuron.time_wise = n.time_wise;
                            c.network.readout = r;
                            c.network.encoder.scheme = e;
                            c.network.encoder.total_steps = t;
                            c.seed = derive_seed(self.base.seed, &id) & MAX_SEED;
                            c.output_dir = self.output_dir.join("cells").join(&id);
                            cells.push(Cell {
                                id,
                                variant,
                                steps: t,
                                config: c,
                            });
                        }
                    }
                }
            }
        }
        cells
    }

    pub fn records_path(&self) -> PathBuf {
        self.output_dir.join(RECORDS_FILE)
    }
}

/// Rows = variants, columns = `T`; each entry is the mean final test accuracy
/// over the completed seeds of that cell.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub steps: Vec<usize>,
    pub rows: Vec<(String, Vec<Option<f64>>)>,
}

impl Table {
    pub fn from_records(records: &[RunRecord], variants: &[String], steps: &[usize]) -> Self {
        let rows = variants
            .iter()
            .map(|v| {
                let cells = steps
                    .iter()
                    .map(|&t| {
                        let accs: Vec<f64> = records
                            .iter()
                            .filter(|r| &r.variant == v && r.steps == t && r.completed())
                            .filter_map(|r| r.final_test_accuracy)
                            .collect();
                        (!accs.is_empty()).then(|| accs.iter().sum::<f64>() / accs.len() as f64)
                    })
                    .collect();
                (v.clone(), cells)
            })
            .collect();
        Self {
            steps: steps.to_vec(),
            rows,
        }
    }

    pub fn get(&self, variant: &str, steps: usize) -> Option<f64> {
        let col = self.steps.iter().position(|&t| t == steps)?;
        self.rows.iter().find(|(v, _)| v == variant).and_then(|(_, c)| c[col])
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["variant".to_string()];
        header.extend(self.steps.iter().map(|t| format!("T={t}")));
        w.write_record(&header).expect("in-memory csv");
        for (v, cells) in &self.rows {
            let mut row = vec![v.clone()];
            row.extend(cells.iter().map(|c| c.map_or(String::new(), |a| a.to_string())));
            w.write_record(&row).expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8")
    }
}

#[derive(Clone, Debug)]
pub struct AblationOutcome {
    pub records: Vec<RunRecord>,
    pub table: Table,
    /// Cells trained by this invocation.
    pub ran: Vec<String>,
}

/// Runs every cell not yet recorded in `<output_dir>/records.jsonl`.
///
/// Without `resume` an existing records file is an error. `stop_after` ends the
/// invocation after that many newly trained cells, leaving the rest for a resume.
pub fn ablate_with_data(
    matrix: &MatrixSpec,
    train: &Dataset,
    test: &Dataset,
    resume: bool,
    stop_after: Option<usize>,
    verbose: bool,
) -> Result<AblationOutcome> {
    matrix.validate()?;
    let path = matrix.records_path();
    let mut records = if path.exists() {
        if !resume {
            return Err(Error::Config(format!(
                "{} already exists; pass --resume to continue it",
                path.display()
            )));
        }
        read_records(&path)?
    } else {
        Vec::new()
    };
    let done: HashSet<String> = records.iter().filter_map(|r| r.cell.clone()).collect();
    let mut ran = Vec::new();
    for cell in matrix.cells() {
        if done.contains(&cell.id) {
            continue;
        }
        if stop_after.is_some_and(|n| ran.len() >= n) {
            break;
        }
        if verbose {
            eprintln!("cell {}", cell.id);
        }
        let opts = RunOptions {
            eval_each_epoch: matrix.eval_each_epoch,
            output_dir: None,
            cell: Some(cell.id.clone()),
            verbose,
        };
        let record = match run_with_data(&cell.config, train, test, &opts) {
            Ok(r) => r,
            Err(e) => failed_record(&cell, e),
        };
        append_record(&path, &record)?;
        records.push(record);
        ran.push(cell.id);
    }
    let order: Vec<String> = matrix.cells().into_iter().map(|c| c.id).collect();
    records.sort_by_key(|r| r.cell.as_ref().and_then(|c| order.iter().position(|o| o == c)));
    let table = Table::from_records(&records, &matrix.variants(), &matrix.steps);
    fs::create_dir_all(&matrix.output_dir).map_err(|source| Error::Io {
        path: matrix.output_dir.clone(),
        source,
    })?;
    report::write_report(&matrix.output_dir, &records, Some((&matrix.variants(), &matrix.steps)))?;
    Ok(AblationOutcome { records, table, ran })
}

fn failed_record(cell: &Cell, e: Error) -> RunRecord {
    RunRecord {
        config_hash: cell.config.hash_hex(),
        config: cell.config.clone(),
        variant: cell.variant.clone(),
        cell: Some(cell.id.clone()),
        steps: cell.steps,
        seed: cell.config.seed,
        status: RunStatus::Failed {
            step: None,
            message: e.to_string(),
        },
        epochs: Vec::new(),
        final_test_accuracy: None,
        final_test_loss: None,
        per_class_accuracy: Vec::new(),
        spike_rates: Vec::new(),
        temporal_weights: None,
        wall_time_s: 0.0,
    }
}

pub fn ablate(matrix: &MatrixSpec, resume: bool, verbose: bool) -> Result<AblationOutcome> {
    let (train, test) = load_datasets(&matrix.base)?;
    ablate_with_data(matrix, &train, &test, resume, None, verbose)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn matrix() -> MatrixSpec {
        MatrixSpec::from_toml(
            r#"
output_dir = "out"
neurons = ["lif", "ulif+tw"]
readouts = ["mean", "quantized"]
encoders = ["direct"]
steps = [2, 4]

[base]
dataset = "mnist"
epochs = 1
learning_rate = 0.01
optimizer = "sgd"
seed = 3
output_dir = "ignored"

[base.network]
readout = "mean"
[base.network.neuron]
kind = "lif"
reset = "soft"
[base.network.encoder]
scheme = "direct"
total_steps = 1
"#,
        )
        .unwrap()
    }

    #[test]
    fn counts_cells_and_rows() {
        let m = matrix();
        assert_eq!(m.cells().len(), 8);
        assert_eq!(m.variants().len(), 4);
        let ids: HashSet<_> = m.cells().into_iter().map(|c| c.config.seed).collect();
        assert_eq!(ids.len(), 8);
    }

    #[test]
    fn variant_parsing() {
        let v: NeuronVariant = "PLIF+TW".parse().unwrap();
        assert_eq!((v.kind, v.time_wise), (NeuronKind::Plif, true));
        assert!("ulif+x".parse::<NeuronVariant>().is_err());
        assert_eq!("ulif_tw".parse::<NeuronVariant>().unwrap().label(), "ULIF+TW");
    }

    #[test]
    fn bad_cell_config_rejected() {
        let mut m = matrix();
        m.steps = vec![0];
        assert!(m.validate().is_err());
    }
}
