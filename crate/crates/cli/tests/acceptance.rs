//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Needs MNIST and Fashion-MNIST under `$SNNF_DATA_DIR` (default `/root/data`),
//! as `<dir>/mnist` and `<dir>/fashion_mnist`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use snnf_cli::ablation::{ablate_with_data, MatrixSpec};
use snnf_cli::config::{ExperimentConfig, DATA_DIR_ENV};
use snnf_cli::experiment::{load_datasets, run_with_data, RunOptions};
use snnf_cli::report::TABLE_FILE;
use snnf_core::dynamics::{check, scenario, simulate, CurrentProfile, ScenarioName};
use snnf_core::encoders::{decode_weighted_phase, encode_ttfs, encode_weighted_phase, EncoderConfig, EncodingScheme};
use snnf_core::network::{
    load_checkpoint, save_checkpoint, train_epoch, Checkpoint, ConvBlock, Network, NetworkSpec, Optimizer, OptimizerConfig,
};
use snnf_core::neurons::{evaluate_sequence, NeuronConfig, NeuronKind, NeuronParams, ResetMode};
use snnf_core::readout::{aggregate_mean, aggregate_quantized, cross_entropy, Readout};
use snnf_core::tensor::{Surrogate, Tape, Tensor};

type Outcome = Result<(bool, String), String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

// Tolerances and gates.
const GRAD_STEP: f64 = 1e-5;
const GRAD_REL_TOL: f64 = 1e-4;
const GRAD_REL_FLOOR: f64 = 1e-8;
const GRAD_TIME_LIMIT_S: f64 = 120.0;
const LIF_TRACE_TOL: f64 = 1e-12;
const CE_TOL: f64 = 1e-12;
const MNIST_GATE: f64 = 0.970;
const MNIST_TIME_LIMIT_S: f64 = 1800.0;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>, lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

fn tiny_spec(kind: NeuronKind) -> NetworkSpec {
    let mut neuron = NeuronConfig::new(kind, ResetMode::Soft).time_wise(true);
    // smooth forward so central differences see a differentiable loss
    neuron.surrogate = Surrogate::Smooth;
    NetworkSpec {
        input_shape: [1, 8, 8],
        classes: 4,
        stem: ConvBlock::new(8, 3, 2),
        conv_blocks: vec![ConvBlock::new(8, 3, 1)],
        fc_sizes: vec![],
        neuron,
        encoder: EncoderConfig::new(EncodingScheme::HybridTtfs, 4),
        readout: Readout::Quantized,
    }
}

fn gradient_fidelity() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let labels = [0, 1, 2, 3, 3, 2, 1, 0];
    let mut worst: Vec<(String, f64)> = Vec::new();
    for kind in [NeuronKind::Ulif, NeuronKind::Plif] {
        let spec = tiny_spec(kind);
        let mut net = Network::build(&spec, 5).map_err(err)?;
        let images = random_tensor(&mut rng, vec![8, 1, 8, 8], 0.0, 1.0);
        let batch = spec.encoder.encode_batch(&images).map_err(err)?;
        for c in net.check_gradients(&batch, &labels, GRAD_STEP, GRAD_REL_FLOOR).map_err(err)? {
            // group by parameter class: conv weight, bias, leak, gain, decay, readout
            let class = c.name.rsplit('.').next().unwrap_or(&c.name).to_string();
            match worst.iter_mut().find(|(n, _)| *n == class) {
                Some(w) => w.1 = w.1.max(c.max_rel_err),
                None => worst.push((class, c.max_rel_err)),
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let expected = ["weight", "bias", "leak", "gain", "decay", "s"];
    let covered = expected.iter().all(|e| worst.iter().any(|(n, _)| n == e));
    let ok = covered && worst.iter().all(|(_, e)| *e <= GRAD_REL_TOL) && secs <= GRAD_TIME_LIMIT_S;
    let detail = worst
        .iter()
        .map(|(n, e)| format!("{n} {e:.1e}"))
        .collect::<Vec<_>>()
        .join(", ");
    Ok((ok, format!("max rel err {detail} (tol {GRAD_REL_TOL:.0e}), {secs:.1}s")))
}

fn neuron_equivalences() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut if_ok, mut lif_spikes_ok, mut max_dev) = (true, true, 0.0f64);
    for case in 0..100 {
        let reset = if case % 2 == 0 { ResetMode::Soft } else { ResetMode::Hard };
        let x = random_tensor(&mut rng, vec![8, 4], -1.0, 2.5);
        let (s_if, _, _) = evaluate_sequence(&NeuronParams::integrate_and_fire(reset), &x).map_err(err)?;
        let (s_u, _, _) = evaluate_sequence(&NeuronParams::ulif(vec![1.0], vec![1.0], reset), &x).map_err(err)?;
        if_ok &= s_if.data().iter().zip(s_u.data()).all(|(a, b)| a.to_bits() == b.to_bits());
        let tau = rng.gen_range(1.05..20.0);
        let lif = NeuronParams::lif(tau, reset).with_reset_potential(0.0);
        let ulif = NeuronParams::ulif(vec![1.0 - 1.0 / tau], vec![1.0 / tau], reset).with_reset_potential(0.0);
        let (s_l, h_l, v_l) = evaluate_sequence(&lif, &x).map_err(err)?;
        let (s_w, h_w, v_w) = evaluate_sequence(&ulif, &x).map_err(err)?;
        lif_spikes_ok &= s_l.data().iter().zip(s_w.data()).all(|(a, b)| a.to_bits() == b.to_bits());
        for (a, b) in h_l.data().iter().zip(h_w.data()).chain(v_l.data().iter().zip(v_w.data())) {
            max_dev = max_dev.max((a - b).abs());
        }
    }
    Ok((
        if_ok && lif_spikes_ok && max_dev <= LIF_TRACE_TOL,
        format!(
            "100 sequences: ULIF(1,1)=IF bitwise {if_ok}; LIF spikes bitwise {lif_spikes_ok}, max trace dev {max_dev:.1e} (tol {LIF_TRACE_TOL:.0e})"
        ),
    ))
}

fn golden_rasters() -> Outcome {
    let input = CurrentProfile::constant(0.75);
    let fire = simulate(&NeuronParams::integrate_and_fire(ResetMode::Soft), &input, 4).map_err(err)?;
    let ulif = NeuronParams::ulif(vec![1.0, 1.0, -3.0, 2.0], vec![2.0; 4], ResetMode::Soft);
    let u = simulate(&ulif, &input, 4).map_err(err)?;
    let (a, b) = (fire.s.clone(), u.s.clone());
    Ok((
        a == [0.0, 1.0, 1.0, 1.0] && b == [1.0, 1.0, 0.0, 0.0],
        format!("IF {a:?} (want [0,1,1,1]), ULIF {b:?} (want [1,1,0,0])"),
    ))
}

fn encoder_properties() -> Outcome {
    let sweep = Tensor::from_vec((0..=256).map(|j| j as f64 / 256.0).collect());
    let n = sweep.numel();
    let mut ttfs_ok = true;
    for steps in [2, 4, 8, 16] {
        let train = encode_ttfs(&sweep, steps).map_err(err)?;
        let mut last = usize::MAX;
        for p in 0..n {
            let fired: Vec<usize> = (0..steps).filter(|&t| train.data()[t * n + p] == 1.0).collect();
            ttfs_ok &= fired.len() <= 1;
            if let Some(&t) = fired.first() {
                ttfs_ok &= t <= last;
                last = t;
            }
        }
    }
    // x = 1 saturates to code 2^K − 1, so the decode bound applies on [0, 1)
    let below_one = Tensor::from_vec((0..256).map(|j| j as f64 / 256.0).collect());
    let mut phase = Vec::new();
    for k in [4usize, 8] {
        let d = decode_weighted_phase(&encode_weighted_phase(&below_one, k, k).map_err(err)?, k).map_err(err)?;
        let e = below_one.data().iter().zip(d.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        phase.push((k, e, e < 0.5f64.powi(k as i32)));
    }
    let mut hybrid_ok = true;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mk = |scheme| {
        let mut s = tiny_spec(NeuronKind::Ulif);
        s.neuron.surrogate = Surrogate::Heaviside;
        s.encoder = EncoderConfig::new(scheme, 1);
        s
    };
    for seed in 0..5 {
        let direct = Network::build(&mk(EncodingScheme::Direct), seed).map_err(err)?;
        let hybrid = Network::build(&mk(EncodingScheme::HybridTtfs), seed).map_err(err)?;
        let images = random_tensor(&mut rng, vec![6, 1, 8, 8], 0.0, 1.0);
        let a = direct.predict_logits(&images).map_err(err)?;
        let b = hybrid.predict_logits(&images).map_err(err)?;
        hybrid_ok &= direct.param("stem.weight") == hybrid.param("stem.weight")
            && a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits());
    }
    let phase_ok = phase.iter().all(|p| p.2);
    let phase_txt = phase
        .iter()
        .map(|(k, e, _)| format!("K={k} err {e:.2e} < {:.2e}", 0.5f64.powi(*k as i32)))
        .collect::<Vec<_>>()
        .join(", ");
    Ok((
        ttfs_ok && phase_ok && hybrid_ok,
        format!("TTFS single/monotone {ttfs_ok}; {phase_txt}; hybrid T=1 == direct bitwise {hybrid_ok}"),
    ))
}

fn readout_degeneration() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut bitwise = true;
    for _ in 0..100 {
        let (t, b, c) = (rng.gen_range(1..9), rng.gen_range(1..5), rng.gen_range(2..12));
        let o = random_tensor(&mut rng, vec![t, b, c], -20.0, 20.0);
        let mut tape = Tape::new();
        let ov = tape.constant(o);
        let w = tape.constant(Tensor::from_vec(vec![1.0; t]));
        let m = aggregate_mean(&mut tape, ov).map_err(err)?;
        let q = aggregate_quantized(&mut tape, ov, w).map_err(err)?;
        bitwise &= tape.value(m).data().iter().zip(tape.value(q).data()).all(|(x, y)| x.to_bits() == y.to_bits());
    }
    let mut worst = 0.0f64;
    for classes in [2usize, 10, 100] {
        let mut tape = Tape::new();
        let l = tape.constant(Tensor::full(&[3, classes], 0.37));
        let loss = cross_entropy(&mut tape, l, &[0, 1, classes - 1]).map_err(err)?;
        worst = worst.max((tape.value(loss).item() - (classes as f64).ln()).abs());
    }
    Ok((
        bitwise && worst <= CE_TOL,
        format!("s=1 quantized == mean bitwise {bitwise}; |CE(uniform) - ln C| max {worst:.1e} (tol {CE_TOL:.0e})"),
    ))
}

fn mnist_gate(data_root: &Path, scratch: &Path) -> Outcome {
    let mut config = ExperimentConfig::load(&configs_dir().join("mnist_hybrid_ulif_tw.toml")).map_err(err)?;
    config.data_dir = Some(data_root.join("mnist"));
    config.output_dir = scratch.join("mnist");
    let start = Instant::now();
    let (train, test) = load_datasets(&config).map_err(err)?;
    let record = run_with_data(&config, &train, &test, &RunOptions::default()).map_err(err)?;
    let secs = start.elapsed().as_secs_f64();
    let acc = record.final_test_accuracy.unwrap_or(0.0);
    let curve = record
        .epochs
        .iter()
        .map(|e| format!("{:.4}", e.test_accuracy.unwrap_or(f64::NAN)))
        .collect::<Vec<_>>()
        .join(" ");
    Ok((
        record.completed() && acc >= MNIST_GATE && secs <= MNIST_TIME_LIMIT_S,
        format!(
            "test acc {acc:.4} (gate {MNIST_GATE}), per epoch [{curve}], {secs:.0}s (limit {MNIST_TIME_LIMIT_S:.0}s), learned s^t {:?}",
            record.temporal_weights.unwrap_or_default()
        ),
    ))
}

fn directional_ablation(data_root: &Path, scratch: &Path) -> Outcome {
    let mut matrix = MatrixSpec::load(&configs_dir().join("fashion_ablation.toml")).map_err(err)?;
    matrix.base.data_dir = Some(data_root.join("fashion_mnist"));
    matrix.output_dir = scratch.join("fashion_ablation");
    let start = Instant::now();
    let (train, test) = load_datasets(&matrix.base).map_err(err)?;
    let out = ablate_with_data(&matrix, &train, &test, false, None, false).map_err(err)?;
    let t = 6;
    let ulif = out.table.get("ULIF+TW/quantized/direct", t);
    let lif = out.table.get("LIF/mean/direct", t);
    let complete = out.table.rows.len() == 10 && out.table.rows.iter().all(|(_, c)| c.iter().all(Option::is_some));
    for (v, cells) in &out.table.rows {
        println!("      {v:<26} T={t}: {}", cells[0].map_or("-".into(), |a| format!("{a:.4}")));
    }
    let ok = complete && matches!((ulif, lif), (Some(u), Some(l)) if u >= l);
    Ok((
        ok,
        format!(
            "mean over {} seeds: ULIF+TW/quantized {:.4} vs LIF/mean {:.4}; full 5x2 matrix {complete}; {:.0}s",
            matrix.seeds,
            ulif.unwrap_or(f64::NAN),
            lif.unwrap_or(f64::NAN),
            start.elapsed().as_secs_f64()
        ),
    ))
}

fn scenarios() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for name in ScenarioName::ALL {
        let o = scenario(name).run().map_err(err)?;
        ok &= o.passed;
        parts.push(format!("{} {}", name.name(), if o.passed { "ok" } else { "FAILED" }));
    }
    let mut rebounds = 0;
    let mut cells = 0;
    for k in 3..=20 {
        let tau = k as f64 / 2.0;
        for reset in [ResetMode::Soft, ResetMode::Hard] {
            for amplitude in [0.5, 1.0, 3.0, 10.0, 100.0] {
                for (onset, offset) in [(0, 1), (2, 10), (1, 15)] {
                    let p = CurrentProfile::inhibitory_release(amplitude, onset, offset);
                    let trace = simulate(&NeuronParams::lif(tau, reset), &p, 20).map_err(err)?;
                    let (passed, _) = check(ScenarioName::Rebound, &[("inhibition", p)], &[("inhibition", trace)]);
                    rebounds += usize::from(passed);
                    cells += 1;
                }
            }
        }
    }
    ok &= rebounds == 0;
    Ok((ok, format!("{}; LIF rebound grid tau 1.5..10: {rebounds}/{cells} rebounded", parts.join(", "))))
}

fn small_config(data_root: &Path, out: &Path) -> Result<ExperimentConfig, String> {
    let mut c = ExperimentConfig::load(&configs_dir().join("mnist_hybrid_ulif_tw.toml")).map_err(err)?;
    c.data_dir = Some(data_root.join("mnist"));
    c.output_dir = out.to_path_buf();
    c.epochs = 1;
    c.train_limit = Some(1000);
    c.test_limit = Some(500);
    Ok(c)
}

fn determinism(data_root: &Path, scratch: &Path) -> Outcome {
    let config = small_config(data_root, &scratch.join("det"))?;
    let (train, test) = load_datasets(&config).map_err(err)?;
    let a = run_with_data(&config, &train, &test, &RunOptions::default()).map_err(err)?;
    let b = run_with_data(&config, &train, &test, &RunOptions::default()).map_err(err)?;
    let streams = a.metric_stream() == b.metric_stream();

    let spec = config.spec();
    let mut net = Network::build(&spec, config.seed).map_err(err)?;
    let mut opt = Optimizer::new(OptimizerConfig::adam(1e-3), net.params()).map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    train_epoch(&mut net, &train, &mut opt, &mut rng, 64).map_err(err)?;
    let path = scratch.join("probe.snnf");
    save_checkpoint(&path, &Checkpoint::capture(&net, Some(&opt), 1, config.seed, config.hash())).map_err(err)?;
    let ck = load_checkpoint(&path).map_err(err)?;
    let mut back = Network::build(&spec, ck.seed).map_err(err)?;
    back.load_params(&ck.params).map_err(err)?;
    let (probe, _) = test.batch(&(0..32).collect::<Vec<_>>()).map_err(err)?;
    let la = net.predict_logits(&probe).map_err(err)?;
    let lb = back.predict_logits(&probe).map_err(err)?;
    let logits = la.data().iter().zip(lb.data()).all(|(x, y)| x.to_bits() == y.to_bits());

    let mut matrix = MatrixSpec::load(&configs_dir().join("fashion_ablation.toml")).map_err(err)?;
    matrix.base = small_config(data_root, &scratch.join("unused"))?;
    matrix.base.network.encoder.scheme = EncodingScheme::Direct;
    matrix.neurons = vec!["lif".parse().map_err(err)?, "ulif+tw".parse().map_err(err)?];
    matrix.steps = vec![2, 4];
    matrix.seeds = 1;
    matrix.output_dir = scratch.join("whole");
    ablate_with_data(&matrix, &train, &test, false, None, false).map_err(err)?;
    let whole = std::fs::read(matrix.output_dir.join(TABLE_FILE)).map_err(err)?;
    matrix.output_dir = scratch.join("resumed");
    ablate_with_data(&matrix, &train, &test, false, Some(3), false).map_err(err)?;
    let resumed_run = ablate_with_data(&matrix, &train, &test, true, None, false).map_err(err)?;
    let resumed = std::fs::read(matrix.output_dir.join(TABLE_FILE)).map_err(err)?;
    let resume_ok = whole == resumed && resumed_run.ran.len() == 5;
    Ok((
        streams && logits && resume_ok,
        format!("metric streams identical {streams}; checkpoint logits bitwise {logits}; resumed table identical {resume_ok}"),
    ))
}

fn main() {
    let data_root = std::env::var_os(DATA_DIR_ENV).map_or_else(|| PathBuf::from("/root/data"), PathBuf::from);
    let scratch = tempfile::tempdir().expect("temp dir");
    let criteria: Vec<Criterion> = vec![
        ("gradient fidelity", Box::new(gradient_fidelity)),
        ("neuron equivalences", Box::new(neuron_equivalences)),
        ("golden rasters", Box::new(golden_rasters)),
        ("encoder properties", Box::new(encoder_properties)),
        ("readout degeneration", Box::new(readout_degeneration)),
        ("MNIST training gate", Box::new(|| mnist_gate(&data_root, scratch.path()))),
        ("directional ablation", Box::new(|| directional_ablation(&data_root, scratch.path()))),
        ("neurocomputational scenarios", Box::new(scenarios)),
        ("determinism and persistence", Box::new(|| determinism(&data_root, scratch.path()))),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let (ok, detail) = match f() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        failed += usize::from(!ok);
        println!("criterion {} {} {name}: {detail}", i + 1, if ok { "PASS" } else { "FAIL" });
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
