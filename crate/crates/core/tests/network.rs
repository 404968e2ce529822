use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use snnf_core::data::Dataset;
use snnf_core::encoders::{EncodedBatch, EncoderConfig, EncodingScheme};
use snnf_core::network::{
    evaluate, load_checkpoint, save_checkpoint, train_epoch, Checkpoint, ConvBlock, Network, NetworkSpec, Optimizer,
    OptimizerConfig,
};
use snnf_core::neurons::{NeuronConfig, NeuronKind, ResetMode};
use snnf_core::readout::Readout;
use snnf_core::tensor::{Surrogate, Tensor};
use snnf_core::Error;

fn tiny(kind: NeuronKind, time_wise: bool, scheme: EncodingScheme, readout: Readout) -> NetworkSpec {
    let mut neuron = NeuronConfig::new(kind, ResetMode::Soft).time_wise(time_wise);
    neuron.surrogate = Surrogate::Smooth;
    NetworkSpec {
        input_shape: [1, 8, 8],
        classes: 4,
        stem: ConvBlock::new(8, 3, 2),
        conv_blocks: vec![ConvBlock::new(8, 3, 1)],
        fc_sizes: vec![],
        neuron,
        encoder: EncoderConfig::new(scheme, 4),
        readout,
    }
}

fn random_images(seed: u64, batch: usize, shape: [usize; 3]) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = batch * shape.iter().product::<usize>();
    Tensor::new(vec![batch, shape[0], shape[1], shape[2]], (0..n).map(|_| rng.gen::<f64>()).collect()).unwrap()
}

fn synthetic(seed: u64, n: usize, shape: [usize; 3], classes: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let size: usize = shape.iter().product();
    let pixels = (0..n * size).map(|_| rng.gen::<u8>()).collect();
    let labels = (0..n).map(|i| (i % classes) as u8).collect();
    Dataset::new(shape, pixels, labels, classes).unwrap()
}

#[test]
fn gradients_match_finite_differences() {
    let labels = [0, 1, 2, 3, 3, 2, 1, 0];
    for kind in [NeuronKind::Ulif, NeuronKind::Plif] {
        let spec = tiny(kind, true, EncodingScheme::HybridTtfs, Readout::Quantized);
        let mut net = Network::build(&spec, 5).unwrap();
        let batch = spec.encoder.encode_batch(&random_images(1, 8, spec.input_shape)).unwrap();
        for check in net.check_gradients(&batch, &labels, 1e-5, 1e-8).unwrap() {
            assert!(check.max_rel_err <= 1e-4, "{check:?}");
        }
    }
}

#[test]
fn hybrid_single_step_equals_direct() {
    let mut neuron = NeuronConfig::new(NeuronKind::Ulif, ResetMode::Soft).time_wise(true);
    neuron.surrogate = Surrogate::Heaviside;
    let mk = |scheme| {
        let mut s = tiny(NeuronKind::Ulif, true, scheme, Readout::Quantized);
        s.encoder = EncoderConfig::new(scheme, 1);
        s.neuron = neuron.clone();
        s
    };
    let direct = Network::build(&mk(EncodingScheme::Direct), 3).unwrap();
    let hybrid = Network::build(&mk(EncodingScheme::HybridTtfs), 3).unwrap();
    assert_eq!(direct.param("stem.weight"), hybrid.param("stem.weight"));
    let images = random_images(2, 5, [1, 8, 8]);
    assert_eq!(
        direct.predict_logits(&images).unwrap().data(),
        hybrid.predict_logits(&images).unwrap().data()
    );
}

#[test]
fn zero_input_zero_bias_gives_zero_outputs() {
    let spec = heaviside(tiny(NeuronKind::Lif, false, EncodingScheme::Direct, Readout::Mean));
    let net = Network::build(&spec, 0).unwrap();
    let logits = net.predict_logits(&Tensor::zeros(&[3, 1, 8, 8])).unwrap();
    assert!(logits.data().iter().all(|&v| v == 0.0));
}

#[test]
fn duplicated_rows_duplicate_outputs() {
    let spec = tiny(NeuronKind::Ulif, true, EncodingScheme::HybridWeightedPhase, Readout::Quantized);
    let mut spec = spec;
    spec.encoder.phase_period = 3;
    let net = Network::build(&spec, 0).unwrap();
    let one = random_images(7, 1, [1, 8, 8]);
    let mut two = one.data().to_vec();
    two.extend_from_slice(one.data());
    let two = Tensor::new(vec![2, 1, 8, 8], two).unwrap();
    let a = net.predict_logits(&one).unwrap();
    let b = net.predict_logits(&two).unwrap();
    assert_eq!(&b.data()[..4], a.data());
    assert_eq!(&b.data()[4..], a.data());
}

#[test]
fn hybrid_net_rejects_direct_batch() {
    let spec = tiny(NeuronKind::If, false, EncodingScheme::HybridTtfs, Readout::Mean);
    let net = Network::build(&spec, 0).unwrap();
    let batch = EncodedBatch::Direct {
        images: Tensor::zeros(&[1, 1, 8, 8]),
        steps: 4,
    };
    assert!(matches!(net.logits_for(&batch), Err(Error::Config(_))));
}

fn heaviside(mut spec: NetworkSpec) -> NetworkSpec {
    spec.neuron.surrogate = Surrogate::Heaviside;
    spec
}

#[test]
fn zero_learning_rate_leaves_params() {
    let spec = heaviside(tiny(NeuronKind::Ulif, true, EncodingScheme::HybridTtfs, Readout::Quantized));
    let data = synthetic(1, 64, [1, 8, 8], 4);
    let mut net = Network::build(&spec, 1).unwrap();
    let before = net.params().to_vec();
    let mut config = OptimizerConfig::sgd(1.0);
    config.lr = 1.0;
    let mut opt = Optimizer::new(config, net.params()).unwrap();
    opt.lr = 0.0;
    train_epoch(&mut net, &data, &mut opt, &mut ChaCha8Rng::seed_from_u64(0), 16).unwrap();
    assert_eq!(net.params(), &before[..]);
}

fn run(spec: &NetworkSpec, data: &Dataset, seed: u64) -> (Vec<f64>, Network) {
    let mut net = Network::build(spec, seed).unwrap();
    let mut opt = Optimizer::new(OptimizerConfig::adam(0.01), net.params()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stream = Vec::new();
    for _ in 0..2 {
        let m = train_epoch(&mut net, data, &mut opt, &mut rng, 16).unwrap();
        let e = evaluate(&net, data, 32).unwrap();
        stream.extend([m.loss, m.first_loss, m.accuracy, e.accuracy, e.loss]);
        stream.extend(e.spike_rates);
    }
    (stream, net)
}

#[test]
fn same_seed_bitwise_metrics() {
    let spec = heaviside(tiny(NeuronKind::Plif, true, EncodingScheme::HybridTtfs, Readout::Quantized));
    let data = synthetic(3, 64, [1, 8, 8], 4);
    let (a, _) = run(&spec, &data, 11);
    let (b, _) = run(&spec, &data, 11);
    assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
}

#[test]
fn unit_ulif_training_equals_if() {
    let base = heaviside(tiny(NeuronKind::If, false, EncodingScheme::Direct, Readout::Mean));
    let mut ulif = base.clone();
    ulif.neuron.kind = NeuronKind::Ulif;
    ulif.neuron.init_leak = 1.0;
    ulif.neuron.init_gain = 1.0;
    let data = synthetic(4, 48, [1, 8, 8], 4);
    let if_net = {
        let mut net = Network::build(&base, 2).unwrap();
        let mut opt = Optimizer::new(OptimizerConfig::sgd(0.05), net.params()).unwrap();
        let m = train_epoch(&mut net, &data, &mut opt, &mut ChaCha8Rng::seed_from_u64(2), 16).unwrap();
        (m, net)
    };
    let mut net = Network::build(&ulif, 2).unwrap();
    // l and i stay frozen at 1
    let names: Vec<String> = net.params().iter().map(|p| p.name.clone()).collect();
    let mut opt = Optimizer::new(OptimizerConfig::sgd(0.05), net.params()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut order: Vec<usize> = (0..data.len()).collect();
    rand::seq::SliceRandom::shuffle(&mut order[..], &mut rng);
    for chunk in order.chunks(16) {
        let (images, labels) = data.batch(chunk).unwrap();
        let batch = ulif.encoder.encode_batch(&images).unwrap();
        let mut grads = net.gradients(&batch, &labels).unwrap();
        for (g, name) in grads.iter_mut().zip(&names) {
            if name.contains(".neuron.") {
                *g = Tensor::zeros(g.shape());
            }
        }
        opt.step(net.params_mut(), &grads).unwrap();
    }
    for p in if_net.1.params() {
        assert_eq!(Some(&p.value), net.param(&p.name), "{}", p.name);
    }
}

#[test]
fn untrained_accuracy_is_chance() {
    let spec = NetworkSpec::lenet(
        [1, 28, 28],
        10,
        NeuronConfig::new(NeuronKind::Ulif, ResetMode::Soft).time_wise(true),
        EncoderConfig::new(EncodingScheme::HybridTtfs, 2),
        Readout::Quantized,
    );
    let net = Network::build(&spec, 9).unwrap();
    let data = synthetic(5, 10_000, [1, 28, 28], 10);
    let e = evaluate(&net, &data, 500).unwrap();
    assert!((e.accuracy - 0.1).abs() <= 0.03, "{}", e.accuracy);
    let again = evaluate(&net, &data.truncated(500), 500).unwrap();
    assert_eq!(again, evaluate(&net, &data.truncated(500), 500).unwrap());
}

#[test]
fn silent_layer_has_zero_rate() {
    let spec = heaviside(tiny(NeuronKind::Lif, false, EncodingScheme::Direct, Readout::Mean));
    let net = Network::build(&spec, 0).unwrap();
    let zeros = Dataset::new([1, 8, 8], vec![0; 64 * 4], vec![0, 1, 2, 3], 4).unwrap();
    let e = evaluate(&net, &zeros, 4).unwrap();
    assert!(e.spike_rates.iter().all(|&r| r == 0.0));
}

#[test]
fn nan_loss_names_step() {
    let spec = heaviside(tiny(NeuronKind::Ulif, false, EncodingScheme::Direct, Readout::Mean));
    let mut net = Network::build(&spec, 0).unwrap();
    net.param_mut("head.bias").unwrap().data_mut()[0] = f64::NAN;
    let data = synthetic(1, 32, [1, 8, 8], 4);
    let mut opt = Optimizer::new(OptimizerConfig::sgd(0.1), net.params()).unwrap();
    let err = train_epoch(&mut net, &data, &mut opt, &mut ChaCha8Rng::seed_from_u64(0), 8).unwrap_err();
    assert!(matches!(err, Error::NonFinite { step: 0 }), "{err}");
}

#[test]
fn checkpoint_round_trip_reproduces_logits() {
    let spec = heaviside(tiny(NeuronKind::Ulif, true, EncodingScheme::HybridTtfs, Readout::Quantized));
    let data = synthetic(8, 64, [1, 8, 8], 4);
    let (_, net) = run(&spec, &data, 4);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.snnf");
    let ck = Checkpoint::capture(&net, None, 2, 4, [1; 32]);
    save_checkpoint(&path, &ck).unwrap();
    let loaded = load_checkpoint(&path).unwrap();
    let mut fresh = Network::build(&spec, 99).unwrap();
    fresh.load_params(&loaded.params).unwrap();
    assert_eq!(fresh.temporal_weights(), net.temporal_weights());
    let probe = random_images(3, 6, [1, 8, 8]);
    assert_eq!(net.predict_logits(&probe).unwrap(), fresh.predict_logits(&probe).unwrap());

    let mut bytes = std::fs::read(&path).unwrap();
    bytes[0] = b'X';
    std::fs::write(&path, &bytes).unwrap();
    assert!(matches!(load_checkpoint(&path), Err(Error::Checkpoint(_))));
}
