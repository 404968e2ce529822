use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use snnf_cli::ablation::{ablate, MatrixSpec};
use snnf_cli::config::{resolve_data_dir, ExperimentConfig};
use snnf_cli::experiment::{restore, run, RunOptions, RECORDS_FILE};
use snnf_cli::raster::{encode_image, raster_csv};
use snnf_cli::record::{append_record, RunStatus};
use snnf_cli::report::report_dir;
use snnf_cli::sim::{describe, parse_current, parse_list, run_scenario, SimArgs};
use snnf_cli::{exit_code, report};
use snnf_core::data::{load_split, DatasetKind, Split};
use snnf_core::dynamics::{export_trace, ScenarioName};
use snnf_core::encoders::EncodingScheme;
use snnf_core::network::evaluate;
use snnf_core::neurons::{NeuronKind, ResetMode};
use snnf_core::{Error, Result};

#[derive(Parser)]
#[command(name = "snnf", version, about = "Train, evaluate and probe spiking neural networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Progress on stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a dataset directory and print split sizes and class counts.
    Ingest {
        #[arg(long)]
        dataset: DatasetKind,
        /// Defaults to $SNNF_DATA_DIR.
        #[arg(long)]
        dir: Option<PathBuf>,
    },
    /// Train per a TOML config; appends a record to <output_dir>/records.jsonl.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate a checkpoint (reads the config.toml stored beside it).
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Write one image's encoding as a CSV raster.
    Encode {
        #[arg(long)]
        dataset: DatasetKind,
        #[arg(long)]
        index: usize,
        #[arg(long)]
        scheme: EncodingScheme,
        #[arg(long)]
        steps: usize,
        #[arg(long)]
        out: PathBuf,
        /// Weighted-phase period K.
        #[arg(long, default_value_t = 8)]
        period: usize,
        /// Index into the test split instead of the training split.
        #[arg(long)]
        test: bool,
        #[arg(long)]
        dir: Option<PathBuf>,
    },
    /// Simulate one neuron under an input current, or run a shipped scenario.
    NeuronSim {
        #[arg(long, default_value = "ulif")]
        model: NeuronKind,
        #[arg(long, default_value = "soft")]
        reset: ResetMode,
        #[arg(long, default_value_t = 1.0)]
        threshold: f64,
        #[arg(long, default_value_t = 0.0)]
        v_reset: f64,
        /// ULIF leak; a comma-separated per-step list enables time-wise mode.
        #[arg(long, default_value = "0.9")]
        leak: String,
        /// ULIF input gain, one value or one per step.
        #[arg(long, default_value = "1")]
        gain: String,
        /// PLIF pre-sigmoid decay, one value or one per step.
        #[arg(long, default_value = "0")]
        decay: String,
        /// LIF time constant.
        #[arg(long, default_value_t = 2.0)]
        tau: f64,
        /// `A`, `step:A:ON:OFF`, `pulse:A:ON:OFF`, `ramp:A:SLOPE:ON:OFF` or `inhibitory:A:ON:OFF`.
        #[arg(long, default_value = "1")]
        current: String,
        #[arg(long, default_value_t = 10)]
        steps: usize,
        /// tonic, phasic, accommodation or rebound; overrides the neuron flags.
        #[arg(long)]
        scenario: Option<ScenarioName>,
        /// Base path for the CSV and SVG trace.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an ablation matrix.
    Ablate {
        #[arg(long)]
        matrix: PathBuf,
        /// Continue a partially completed matrix.
        #[arg(long)]
        resume: bool,
    },
    /// Regenerate table, plots and summary from <dir>/records.jsonl.
    Report {
        #[arg(long)]
        dir: PathBuf,
    },
}

fn ingest(dataset: DatasetKind, dir: Option<PathBuf>) -> Result<()> {
    let dir = resolve_data_dir(dir.as_deref(), dataset)?;
    for split in [Split::Train, Split::Test] {
        let d = load_split(dataset, &dir, split)?;
        let mut counts = vec![0usize; d.classes()];
        for &l in d.labels() {
            counts[l as usize] += 1;
        }
        println!("{split:?}: {} images {:?}, class counts {counts:?}", d.len(), d.image_shape());
    }
    Ok(())
}

fn train(path: PathBuf, verbose: bool) -> Result<()> {
    let config = ExperimentConfig::load(&path)?;
    let opts = RunOptions {
        verbose,
        ..RunOptions::default()
    };
    let record = run(&config, &opts)?;
    append_record(&config.output_dir.join(RECORDS_FILE), &record)?;
    match &record.status {
        RunStatus::Completed => {
            println!(
                "{}: test accuracy {:.4} after {} epochs ({:.1}s)",
                record.variant,
                record.final_test_accuracy.unwrap_or(f64::NAN),
                record.epochs.len(),
                record.wall_time_s
            );
            if let Some(w) = &record.temporal_weights {
                println!("learned s^t: {w:?}");
            }
            Ok(())
        }
        RunStatus::Failed { step: Some(step), .. } => Err(Error::NonFinite { step: *step }),
        RunStatus::Failed { message, .. } => Err(Error::Contract(message.clone())),
    }
}

fn eval(path: PathBuf) -> Result<()> {
    let (config, net, ck) = restore(&path)?;
    let test = load_split(config.dataset, &config.resolve_data_dir()?, Split::Test)?;
    let test = match config.test_limit {
        Some(n) => test.truncated(n),
        None => test,
    };
    let e = evaluate(&net, &test, 500)?;
    println!("epoch {}: test accuracy {:.4}, loss {:.4}", ck.epoch, e.accuracy, e.loss);
    println!("per-class accuracy: {:?}", e.per_class);
    println!("spike rates: {:?}", e.spike_rates);
    if let Some(w) = net.temporal_weights() {
        println!("learned s^t: {w:?}");
    }
    Ok(())
}

fn write_file(path: &std::path::Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest { dataset, dir } => ingest(dataset, dir),
        Command::Train { config } => train(config, cli.verbose),
        Command::Eval { checkpoint } => eval(checkpoint),
        Command::Encode {
            dataset,
            index,
            scheme,
            steps,
            out,
            period,
            test,
            dir,
        } => {
            let dir = resolve_data_dir(dir.as_deref(), dataset)?;
            let split = if test { Split::Test } else { Split::Train };
            let data = load_split(dataset, &dir, split)?;
            let raster = encode_image(&data, index, scheme, steps, period)?;
            write_file(&out, &raster_csv(&raster))?;
            println!("wrote {} steps x {} pixels to {}", raster.len(), raster[0].len(), out.display());
            Ok(())
        }
        Command::NeuronSim {
            model,
            reset,
            threshold,
            v_reset,
            leak,
            gain,
            decay,
            tau,
            current,
            steps,
            scenario,
            out,
        } => {
            if let Some(name) = scenario {
                let outcome = run_scenario(name, out.as_deref())?;
                for (label, trace) in &outcome.traces {
                    println!("{label}: {}", describe(trace));
                }
                println!("{}: {} ({})", name.name(), if outcome.passed { "pass" } else { "FAIL" }, outcome.detail);
                return if outcome.passed {
                    Ok(())
                } else {
                    Err(Error::Contract(format!("scenario {} failed", name.name())))
                };
            }
            let args = SimArgs {
                model,
                reset,
                threshold,
                v_reset,
                leak: parse_list(&leak)?,
                gain: parse_list(&gain)?,
                decay: parse_list(&decay)?,
                tau,
            };
            let trace = args.simulate(&parse_current(&current)?, steps)?;
            println!("{}", describe(&trace));
            if let Some(path) = out {
                let (c, s) = export_trace(&trace, &path)?;
                println!("wrote {} and {}", c.display(), s.display());
            }
            Ok(())
        }
        Command::Ablate { matrix, resume } => {
            let m = MatrixSpec::load(&matrix)?;
            let outcome = ablate(&m, resume, cli.verbose)?;
            let failed = outcome.records.iter().filter(|r| !r.completed()).count();
            print!("{}", outcome.table.to_csv());
            println!(
                "{} cells run now, {} recorded, {failed} failed; outputs in {}",
                outcome.ran.len(),
                outcome.records.len(),
                m.output_dir.display()
            );
            Ok(())
        }
        Command::Report { dir } => {
            let table = report_dir(&dir)?;
            print!("{}", table.to_csv());
            println!("wrote {} and plots to {}", report::SUMMARY_FILE, dir.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
