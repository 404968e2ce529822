//! LeNet-style spiking classifier with optional dual stem for hybrid inputs.
//!
//! Layout, per time step and with shared weights across steps:
//!
//! ```text
//! stem conv → pool → neurons → [conv → pool → neurons]* → flatten
//!           → [linear → neurons]* → linear head → O(t) → readout → logits
//! ```
//!
//! All per-step activations are processed together as a `[T·B, ...]` batch
//! (time-major), and each neuron layer unrolls over `T` internally.

mod checkpoint;
mod gradcheck;
mod optim;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, OptimizerState, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use gradcheck::{relative_error, GradCheck};
pub use optim::{Optimizer, OptimizerConfig, OptimizerKind};
pub use train::{evaluate, train_epoch, EpochMetrics, Evaluation};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoders::{EncodedBatch, EncoderConfig, EncodingScheme};
use crate::error::{Error, Result};
use crate::neurons::{run_sequence, BoundNeuron, NeuronConfig};
use crate::readout::{aggregate, Readout};
use crate::tensor::{Tape, Tensor, Var};
use crate::derive_seed;

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvBlock {
    pub out_channels: usize,
    pub kernel: usize,
    #[serde(default = "one")]
    pub stride: usize,
    #[serde(default)]
    pub padding: usize,
    /// Average-pool window applied after the convolution; 1 disables pooling.
    #[serde(default = "one")]
    pub pool: usize,
}

impl ConvBlock {
    pub fn new(out_channels: usize, kernel: usize, pool: usize) -> Self {
        Self {
            out_channels,
            kernel,
            stride: 1,
            padding: 0,
            pool,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// `[C, H, W]` of one input image.
    pub input_shape: [usize; 3],
    pub classes: usize,
    /// First convolution; hybrid encoders get a second stem with the same shape.
    pub stem: ConvBlock,
    pub conv_blocks: Vec<ConvBlock>,
    /// Hidden fully connected widths; the classifier head is appended.
    pub fc_sizes: Vec<usize>,
    pub neuron: NeuronConfig,
    pub encoder: EncoderConfig,
    pub readout: Readout,
}

impl NetworkSpec {
    /// conv(6, 5×5) → pool → conv(16, 5×5) → pool → fc(120) → fc(84) → fc(classes).
    pub fn lenet(
        input_shape: [usize; 3],
        classes: usize,
        neuron: NeuronConfig,
        encoder: EncoderConfig,
        readout: Readout,
    ) -> Self {
        Self {
            input_shape,
            classes,
            stem: ConvBlock::new(6, 5, 2),
            conv_blocks: vec![ConvBlock::new(16, 5, 2)],
            fc_sizes: vec![120, 84],
            neuron,
            encoder,
            readout,
        }
    }

    pub fn steps(&self) -> usize {
        self.encoder.total_steps
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
}

#[derive(Clone, Debug)]
struct ConvLayer {
    weight: usize,
    bias: usize,
    stride: usize,
    padding: usize,
    pool: usize,
}

#[derive(Clone, Debug)]
struct LinearLayer {
    weight: usize,
    bias: usize,
}

#[derive(Clone, Debug, Default)]
struct NeuronSlot {
    leak: Option<usize>,
    gain: Option<usize>,
    decay: Option<usize>,
}

#[derive(Clone, Debug)]
struct Plan {
    stem: ConvLayer,
    stem_temporal: Option<ConvLayer>,
    stem_neuron: NeuronSlot,
    blocks: Vec<(ConvLayer, NeuronSlot)>,
    hidden: Vec<(LinearLayer, NeuronSlot)>,
    head: LinearLayer,
    temporal_weights: Option<usize>,
}

/// Result of one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardOutput {
    /// Per-step outputs `O(t)`, `[T, B, classes]`.
    pub outputs: Var,
    /// `[B, classes]`.
    pub logits: Var,
    /// `(spike count, neuron-steps)` for each neuron layer.
    pub activity: Vec<(f64, usize)>,
}

#[derive(Clone, Debug)]
pub struct Network {
    spec: NetworkSpec,
    params: Vec<Parameter>,
    plan: Plan,
}

struct Builder {
    seed: u64,
    params: Vec<Parameter>,
}

impl Builder {
    fn push(&mut self, name: String, value: Tensor) -> usize {
        self.params.push(Parameter { name, value });
        self.params.len() - 1
    }

    /// Kaiming-uniform weights, `U(−√(6/fan_in), √(6/fan_in))`, from a stream keyed by name.
    fn kaiming(&mut self, name: String, shape: &[usize], fan_in: usize) -> usize {
        let bound = (6.0 / fan_in as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, &name));
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
        self.push(name, Tensor::new(shape.to_vec(), data).expect("shape product"))
    }

    fn conv(&mut self, name: &str, block: &ConvBlock, in_channels: usize) -> ConvLayer {
        let k = block.kernel;
        let weight = self.kaiming(
            format!("{name}.weight"),
            &[block.out_channels, in_channels, k, k],
            in_channels * k * k,
        );
        let bias = self.push(format!("{name}.bias"), Tensor::zeros(&[block.out_channels]));
        ConvLayer {
            weight,
            bias,
            stride: block.stride,
            padding: block.padding,
            pool: block.pool,
        }
    }

    fn linear(&mut self, name: &str, fan_in: usize, fan_out: usize) -> LinearLayer {
        let weight = self.kaiming(format!("{name}.weight"), &[fan_in, fan_out], fan_in);
        let bias = self.push(format!("{name}.bias"), Tensor::zeros(&[fan_out]));
        LinearLayer { weight, bias }
    }

    fn neuron(&mut self, name: &str, config: &NeuronConfig, steps: usize) -> NeuronSlot {
        let mut slot = NeuronSlot::default();
        for (kind, init) in config.initial_params(steps) {
            let idx = self.push(format!("{name}.neuron.{kind}"), Tensor::from_vec(init));
            match kind {
                "leak" => slot.leak = Some(idx),
                "gain" => slot.gain = Some(idx),
                _ => slot.decay = Some(idx),
            }
        }
        slot
    }
}

/// Spatial size after a conv block, or a message naming the failing layer.
fn conv_out(name: &str, block: &ConvBlock, shape: [usize; 3]) -> Result<[usize; 3]> {
    let [_, h, w] = shape;
    let fail = |what: &str| Error::config(format!("layer {name}: {what} for input {shape:?}"));
    if block.out_channels == 0 || block.kernel == 0 || block.stride == 0 || block.pool == 0 {
        return Err(fail("channels, kernel, stride and pool must be positive"));
    }
    let (ph, pw) = (h + 2 * block.padding, w + 2 * block.padding);
    if ph < block.kernel || pw < block.kernel {
        return Err(fail(&format!("kernel {} does not fit", block.kernel)));
    }
    let (oh, ow) = ((ph - block.kernel) / block.stride + 1, (pw - block.kernel) / block.stride + 1);
    let (oh, ow) = (oh / block.pool, ow / block.pool);
    if oh == 0 || ow == 0 {
        return Err(fail(&format!("pool {} leaves no output", block.pool)));
    }
    Ok([block.out_channels, oh, ow])
}

impl Network {
    /// Builds the network and initialises every parameter deterministically from `seed`.
    ///
    /// Each parameter draws from its own stream keyed by `(seed, name)`, so two
    /// specs that share a layer name and shape get identical initial values.
    pub fn build(spec: &NetworkSpec, seed: u64) -> Result<Self> {
        spec.encoder.validate()?;
        spec.neuron.validate()?;
        let steps = spec.steps();
        if spec.input_shape.contains(&0) || spec.classes == 0 {
            return Err(Error::config("input shape and class count must be positive"));
        }
        let mut b = Builder {
            seed,
            params: Vec::new(),
        };
        let mut shape = conv_out("stem", &spec.stem, spec.input_shape)?;
        let stem = b.conv("stem", &spec.stem, spec.input_shape[0]);
        let stem_temporal = spec
            .encoder
            .scheme
            .is_hybrid()
            .then(|| b.conv("stem_temporal", &spec.stem, spec.input_shape[0]));
        let stem_neuron = b.neuron("stem", &spec.neuron, steps);
        let mut blocks = Vec::new();
        for (i, block) in spec.conv_blocks.iter().enumerate() {
            let name = format!("conv{}", i + 1);
            let next = conv_out(&name, block, shape)?;
            let layer = b.conv(&name, block, shape[0]);
            let neuron = b.neuron(&name, &spec.neuron, steps);
            blocks.push((layer, neuron));
            shape = next;
        }
        let mut width: usize = shape.iter().product();
        let mut hidden = Vec::new();
        for (i, &size) in spec.fc_sizes.iter().enumerate() {
            let name = format!("fc{}", i + 1);
            if size == 0 {
                return Err(Error::config(format!("layer {name}: width must be positive")));
            }
            let layer = b.linear(&name, width, size);
            let neuron = b.neuron(&name, &spec.neuron, steps);
            hidden.push((layer, neuron));
            width = size;
        }
        let head = b.linear("head", width, spec.classes);
        let temporal_weights = (spec.readout == Readout::Quantized)
            .then(|| b.push("readout.s".into(), Tensor::from_vec(vec![1.0; steps])));
        Ok(Self {
            spec: spec.clone(),
            params: b.params,
            plan: Plan {
                stem,
                stem_temporal,
                stem_neuron,
                blocks,
                hidden,
                head,
                temporal_weights,
            },
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn steps(&self) -> usize {
        self.spec.steps()
    }

    pub fn params(&self) -> &[Parameter] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Parameter] {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.params.iter().find(|p| p.name == name).map(|p| &p.value)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.iter_mut().find(|p| p.name == name).map(|p| &mut p.value)
    }

    /// Learned `sᵗ`, when the readout is quantized.
    pub fn temporal_weights(&self) -> Option<Vec<f64>> {
        self.plan
            .temporal_weights
            .map(|i| self.params[i].value.data().to_vec())
    }

    /// Replaces all parameter values, checking names and shapes.
    pub fn load_params(&mut self, params: &[(String, Tensor)]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} parameters, network has {}",
                params.len(),
                self.params.len()
            )));
        }
        for (p, (name, value)) in self.params.iter().zip(params) {
            if &p.name != name || p.value.shape() != value.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter {name} {:?} does not match {} {:?}",
                    value.shape(),
                    p.name,
                    p.value.shape()
                )));
            }
        }
        for (p, (_, value)) in self.params.iter_mut().zip(params) {
            p.value = value.clone();
        }
        Ok(())
    }

    pub fn num_neuron_layers(&self) -> usize {
        1 + self.plan.blocks.len() + self.plan.hidden.len()
    }

    /// Registers every parameter on `tape` as a gradient-tracked leaf, in table order.
    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.params.iter().map(|p| tape.param(p.value.clone())).collect()
    }

    fn conv(&self, tape: &mut Tape, vars: &[Var], layer: &ConvLayer, x: Var) -> Result<Var> {
        let y = tape.conv2d(x, vars[layer.weight], layer.stride, layer.padding)?;
        tape.add_bias(y, vars[layer.bias])
    }

    fn pool(tape: &mut Tape, layer: &ConvLayer, x: Var) -> Result<Var> {
        if layer.pool > 1 {
            tape.avg_pool(x, layer.pool)
        } else {
            Ok(x)
        }
    }

    fn linear(tape: &mut Tape, vars: &[Var], layer: &LinearLayer, x: Var) -> Result<Var> {
        let y = tape.matmul(x, vars[layer.weight])?;
        tape.add_bias(y, vars[layer.bias])
    }

    /// Unrolls a neuron layer over `[T·B, ...]` input; returns spikes of the same shape.
    fn neurons(&self, tape: &mut Tape, vars: &[Var], slot: &NeuronSlot, x: Var, steps: usize) -> Result<(Var, (f64, usize))> {
        let flat = tape.shape(x).to_vec();
        let mut seq_shape = vec![steps, flat[0] / steps];
        seq_shape.extend_from_slice(&flat[1..]);
        let seq = tape.reshape(x, &seq_shape)?;
        let bound = BoundNeuron::new(
            &self.spec.neuron,
            slot.leak.map(|i| vars[i]),
            slot.gain.map(|i| vars[i]),
            slot.decay.map(|i| vars[i]),
        );
        let out = run_sequence(tape, &bound, seq)?;
        let s = tape.value(out.spikes);
        let activity = (s.sum(), s.numel());
        Ok((tape.reshape(out.spikes, &flat)?, activity))
    }

    fn stem(&self, tape: &mut Tape, vars: &[Var], batch: &EncodedBatch) -> Result<Var> {
        let image_dims = |s: &[usize]| s.len() == 4 && s[1..] == self.spec.input_shape[..];
        let bad_input = |s: &[usize]| Error::Dimension {
            op: "network input",
            lhs: s.to_vec(),
            rhs: self.spec.input_shape.to_vec(),
        };
        match batch {
            EncodedBatch::Direct { images, steps } => {
                if !image_dims(images.shape()) {
                    return Err(bad_input(images.shape()));
                }
                let x = tape.constant(images.clone());
                let y = self.conv(tape, vars, &self.plan.stem, x)?;
                tape.repeat(y, *steps)
            }
            EncodedBatch::Temporal { train } => {
                let s = train.shape();
                if s.len() != 5 || !image_dims(&s[1..]) {
                    return Err(bad_input(s));
                }
                let flat = train.clone().reshape(&[s[0] * s[1], s[2], s[3], s[4]])?;
                let x = tape.constant(flat);
                self.conv(tape, vars, &self.plan.stem, x)
            }
            EncodedBatch::Hybrid { direct, temporal } => {
                let temporal_stem = self.plan.stem_temporal.as_ref().ok_or_else(|| {
                    Error::config("hybrid input given to a network built without a temporal stem")
                })?;
                if !image_dims(direct.shape()) {
                    return Err(bad_input(direct.shape()));
                }
                let x = tape.constant(direct.clone());
                let a = self.conv(tape, vars, &self.plan.stem, x)?;
                let s = temporal.shape();
                if s[0] == 0 {
                    return Ok(a);
                }
                if s.len() != 5 || s[1] != direct.shape()[0] || !image_dims(&s[1..]) {
                    return Err(bad_input(s));
                }
                let flat = temporal.clone().reshape(&[s[0] * s[1], s[2], s[3], s[4]])?;
                let xt = tape.constant(flat);
                let b = self.conv(tape, vars, temporal_stem, xt)?;
                tape.concat(&[a, b])
            }
        }
    }

    /// Forward pass over an encoded batch, using parameter variables from [`bind`](Self::bind).
    pub fn forward(&self, tape: &mut Tape, vars: &[Var], batch: &EncodedBatch) -> Result<ForwardOutput> {
        let steps = self.steps();
        if batch.steps() != steps {
            return Err(Error::config(format!(
                "batch has {} time steps, network was built for {steps}",
                batch.steps()
            )));
        }
        let hybrid_net = self.spec.encoder.scheme.is_hybrid();
        if hybrid_net != matches!(batch, EncodedBatch::Hybrid { .. }) {
            return Err(Error::config(format!(
                "batch encoding does not match the network's {} encoder",
                self.spec.encoder.scheme.name()
            )));
        }
        let batch_size = batch.batch_size();
        let mut activity = Vec::with_capacity(self.num_neuron_layers());

        let x = self.stem(tape, vars, batch)?;
        let x = Self::pool(tape, &self.plan.stem, x)?;
        let (mut x, a) = self.neurons(tape, vars, &self.plan.stem_neuron, x, steps)?;
        activity.push(a);
        for (layer, slot) in &self.plan.blocks {
            let y = self.conv(tape, vars, layer, x)?;
            let y = Self::pool(tape, layer, y)?;
            let (s, a) = self.neurons(tape, vars, slot, y, steps)?;
            activity.push(a);
            x = s;
        }
        let features = tape.value(x).numel() / (steps * batch_size);
        x = tape.reshape(x, &[steps * batch_size, features])?;
        for (layer, slot) in &self.plan.hidden {
            let y = Self::linear(tape, vars, layer, x)?;
            let (s, a) = self.neurons(tape, vars, slot, y, steps)?;
            activity.push(a);
            x = s;
        }
        let y = Self::linear(tape, vars, &self.plan.head, x)?;
        let outputs = tape.reshape(y, &[steps, batch_size, self.spec.classes])?;
        let weights = self.plan.temporal_weights.map(|i| vars[i]);
        let logits = aggregate(tape, self.spec.readout, outputs, weights)?;
        Ok(ForwardOutput {
            outputs,
            logits,
            activity,
        })
    }

    /// Inference-only logits `[B, classes]` for raw images `[B, C, H, W]`.
    pub fn predict_logits(&self, images: &Tensor) -> Result<Tensor> {
        let batch = self.spec.encoder.encode_batch(images)?;
        self.logits_for(&batch)
    }

    pub fn logits_for(&self, batch: &EncodedBatch) -> Result<Tensor> {
        let mut tape = Tape::inference();
        let vars = self.bind(&mut tape);
        let out = self.forward(&mut tape, &vars, batch)?;
        Ok(tape.value(out.logits).clone())
    }

    pub fn encoder_scheme(&self) -> EncodingScheme {
        self.spec.encoder.scheme
    }
}
