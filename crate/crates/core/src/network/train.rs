use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use super::{Network, Optimizer};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::readout::{cross_entropy, predictions};
use crate::tensor::{Tape, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct EpochMetrics {
    /// Mean training loss over the epoch.
    pub loss: f64,
    /// Loss of the first mini-batch.
    pub first_loss: f64,
    pub accuracy: f64,
    pub batches: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub loss: f64,
    pub per_class: Vec<f64>,
    /// Mean firing rate of each neuron layer.
    pub spike_rates: Vec<f64>,
}

impl Network {
    /// One optimisation step on a batch of raw images; returns `(loss, correct)`.
    pub fn train_step(&mut self, opt: &mut Optimizer, images: &Tensor, labels: &[usize]) -> Result<(f64, usize)> {
        let batch = self.spec.encoder.encode_batch(images)?;
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let out = self.forward(&mut tape, &vars, &batch)?;
        let loss = cross_entropy(&mut tape, out.logits, labels)?;
        let value = tape.value(loss).item();
        if !value.is_finite() {
            return Err(Error::NonFinite { step: opt.steps });
        }
        let correct = predictions(tape.value(out.logits))
            .iter()
            .zip(labels)
            .filter(|(p, l)| p == l)
            .count();
        let mut grads = tape.backward(loss)?;
        let grads: Vec<Tensor> = vars
            .iter()
            .zip(&self.params)
            .map(|(&v, p)| grads.take(v).unwrap_or_else(|| Tensor::zeros(p.value.shape())))
            .collect();
        if grads.iter().any(|g| !g.all_finite()) {
            return Err(Error::NonFinite { step: opt.steps });
        }
        opt.step(&mut self.params, &grads)?;
        Ok((value, correct))
    }
}

/// One pass over `data` in an order drawn from `rng`.
///
/// A non-finite loss or gradient aborts with [`Error::NonFinite`] carrying the
/// optimiser step at which it happened; parameters are left as they were before that step.
pub fn train_epoch(
    net: &mut Network,
    data: &Dataset,
    opt: &mut Optimizer,
    rng: &mut ChaCha8Rng,
    batch_size: usize,
) -> Result<EpochMetrics> {
    if batch_size == 0 {
        return Err(Error::config("batch size must be positive"));
    }
    if data.is_empty() {
        return Err(Error::data("training set is empty"));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(rng);
    let (mut total, mut correct, mut first, mut batches) = (0.0, 0, f64::NAN, 0);
    for chunk in order.chunks(batch_size) {
        let (images, labels) = data.batch(chunk)?;
        let (loss, hits) = net.train_step(opt, &images, &labels)?;
        if batches == 0 {
            first = loss;
        }
        total += loss * chunk.len() as f64;
        correct += hits;
        batches += 1;
    }
    Ok(EpochMetrics {
        loss: total / data.len() as f64,
        first_loss: first,
        accuracy: correct as f64 / data.len() as f64,
        batches,
    })
}

pub fn evaluate(net: &Network, data: &Dataset, batch_size: usize) -> Result<Evaluation> {
    if batch_size == 0 {
        return Err(Error::config("batch size must be positive"));
    }
    if data.is_empty() {
        return Err(Error::data("evaluation set is empty"));
    }
    let classes = data.classes();
    let mut hits = vec![0usize; classes];
    let mut counts = vec![0usize; classes];
    let mut spikes = vec![(0.0, 0usize); net.num_neuron_layers()];
    let mut total_loss = 0.0;
    let indices: Vec<usize> = (0..data.len()).collect();
    for chunk in indices.chunks(batch_size) {
        let (images, labels) = data.batch(chunk)?;
        let batch = net.spec.encoder.encode_batch(&images)?;
        let mut tape = Tape::inference();
        let vars = net.bind(&mut tape);
        let out = net.forward(&mut tape, &vars, &batch)?;
        let loss = cross_entropy(&mut tape, out.logits, &labels)?;
        total_loss += tape.value(loss).item() * chunk.len() as f64;
        for (p, &l) in predictions(tape.value(out.logits)).iter().zip(&labels) {
            counts[l] += 1;
            hits[l] += usize::from(*p == l);
        }
        for (acc, (s, n)) in spikes.iter_mut().zip(out.activity) {
            acc.0 += s;
            acc.1 += n;
        }
    }
    Ok(Evaluation {
        accuracy: hits.iter().sum::<usize>() as f64 / data.len() as f64,
        loss: total_loss / data.len() as f64,
        per_class: hits
            .iter()
            .zip(&counts)
            .map(|(&h, &c)| if c == 0 { 0.0 } else { h as f64 / c as f64 })
            .collect(),
        spike_rates: spikes.iter().map(|&(s, n)| s / n.max(1) as f64).collect(),
    })
}
