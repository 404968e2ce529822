//! Reverse-mode differentiation tape.
//!
//! Every operation appends one record holding its output and whatever it needs
//! for the backward pass. Records are only ever appended, so the record order
//! is the forward execution order and [`Tape::backward`] walks it in reverse.
//! A tape supports exactly one backward pass; a second call is rejected.

use std::f64::consts::PI;

use super::conv::{avg_pool_backward, avg_pool_forward, ConvGeometry};
use super::{gemm, gemm_strided, sigmoid, Tensor};
use crate::error::{Error, Result};

/// Handle to a record on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Forward behaviour of the spike nonlinearity. The backward pass always uses the
/// arctangent surrogate `α / (2(1 + (π·α·(h − θ)/2)²))`.
///
/// `Smooth` replaces the step with `1/2 + atan(π·α·(h − θ)/2)/π`, whose exact
/// derivative is that surrogate. It exists so that finite differences of the
/// whole network can be compared against the tape.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Surrogate {
    #[default]
    Heaviside,
    Smooth,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Broadcast {
    Same,
    LeftScalar,
    RightScalar,
}

enum Op {
    Leaf,
    Add(Var, Var, Broadcast),
    Sub(Var, Var, Broadcast),
    Mul(Var, Var, Broadcast),
    Scale(Var, f64),
    AddScalar(Var),
    Sigmoid(Var),
    MatMul(Var, Var),
    Conv2d {
        input: Var,
        kernel: Var,
        geom: ConvGeometry,
        cols: Option<Vec<f64>>,
    },
    AddBias {
        x: Var,
        bias: Var,
    },
    AvgPool {
        x: Var,
        k: usize,
    },
    Reshape(Var),
    Select {
        x: Var,
        index: usize,
    },
    IndexFirst {
        x: Var,
        index: usize,
    },
    Stack(Vec<Var>),
    Concat(Vec<Var>),
    Repeat {
        x: Var,
        times: usize,
    },
    Spike {
        h: Var,
        threshold: f64,
        alpha: f64,
    },
    TimeWeightedSum {
        outputs: Var,
        weights: Option<Var>,
        scale: f64,
    },
    CrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<f64>,
    },
    Sum(Var),
}

struct Record {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Gradients produced by one backward pass, keyed by leaf.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of a `requires_grad` leaf. Leaves off the loss path get zeros.
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor> {
        self.grads.get_mut(var.0).and_then(Option::take)
    }
}

pub struct Tape {
    records: Vec<Record>,
    grad_enabled: bool,
    consumed: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            records: Vec::new(),
            grad_enabled: true,
            consumed: false,
        }
    }

    /// A tape that records values only; nothing on it requires a gradient.
    pub fn inference() -> Self {
        Self {
            grad_enabled: false,
            ..Self::new()
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.records[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.records[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.records[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        debug_assert!(!self.consumed, "recording on a tape after backward");
        self.records.push(Record {
            value,
            op,
            requires_grad: requires_grad && self.grad_enabled,
        });
        Var(self.records.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.records[v.0].requires_grad)
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    fn broadcast(&self, op: &'static str, a: Var, b: Var) -> Result<(Broadcast, Vec<usize>)> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() == tb.shape() {
            Ok((Broadcast::Same, ta.shape().to_vec()))
        } else if ta.is_scalar() {
            Ok((Broadcast::LeftScalar, tb.shape().to_vec()))
        } else if tb.is_scalar() {
            Ok((Broadcast::RightScalar, ta.shape().to_vec()))
        } else {
            Err(Error::Dimension {
                op,
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            })
        }
    }

    fn zip(&self, a: Var, b: Var, mode: Broadcast, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let (da, db) = (self.value(a).data(), self.value(b).data());
        match mode {
            Broadcast::Same => da.iter().zip(db).map(|(&x, &y)| f(x, y)).collect(),
            Broadcast::LeftScalar => db.iter().map(|&y| f(da[0], y)).collect(),
            Broadcast::RightScalar => da.iter().map(|&x| f(x, db[0])).collect(),
        }
    }

    fn binary(&mut self, name: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        let (mode, shape) = self.broadcast(name, a, b)?;
        let data = self.zip(a, b, mode, f);
        let op = match name {
            "add" => Op::Add(a, b, mode),
            "sub" => Op::Sub(a, b, mode),
            _ => Op::Mul(a, b, mode),
        };
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(Tensor { shape, data }, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y)
    }

    /// `c · x` for a constant `c`.
    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let t = self.value(x);
        let value = Tensor {
            shape: t.shape().to_vec(),
            data: t.data().iter().map(|&v| c * v).collect(),
        };
        let rg = self.any_grad(&[x]);
        self.push(value, Op::Scale(x, c), rg)
    }

    /// `x + c` for a constant `c`.
    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        let t = self.value(x);
        let value = Tensor {
            shape: t.shape().to_vec(),
            data: t.data().iter().map(|&v| v + c).collect(),
        };
        let rg = self.any_grad(&[x]);
        self.push(value, Op::AddScalar(x), rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let value = Tensor {
            shape: t.shape().to_vec(),
            data: t.data().iter().map(|&v| sigmoid(v)).collect(),
        };
        let rg = self.any_grad(&[x]);
        self.push(value, Op::Sigmoid(x), rg)
    }

    /// Matrix product of `[m, k]` and `[k, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::Dimension {
                op: "matmul",
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut data = vec![0.0; m * n];
        gemm(m, k, n, self.value(a).data(), self.value(b).data(), &mut data);
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(Tensor { shape: vec![m, n], data }, Op::MatMul(a, b), rg))
    }

    /// Cross-correlation of `[N, C, H, W]` input with `[O, C, kH, kW]` kernel.
    pub fn conv2d(&mut self, input: Var, kernel: Var, stride: usize, padding: usize) -> Result<Var> {
        let geom = ConvGeometry::new(self.shape(input), self.shape(kernel), stride, padding)?;
        let cols = geom.im2col(self.value(input).data());
        let (o, pl, np) = (geom.out_channels, geom.patch_len(), geom.positions());
        let mut out = vec![0.0; geom.batch * o * np];
        let k = self.value(kernel).data();
        for n in 0..geom.batch {
            gemm(
                o,
                pl,
                np,
                k,
                &cols[n * pl * np..(n + 1) * pl * np],
                &mut out[n * o * np..(n + 1) * o * np],
            );
        }
        let rg = self.any_grad(&[input, kernel]);
        let keep_cols = rg && self.grad_enabled && self.records[kernel.0].requires_grad;
        let op = Op::Conv2d {
            input,
            kernel,
            geom,
            cols: keep_cols.then_some(cols),
        };
        Ok(self.push(
            Tensor {
                shape: geom.out_shape(),
                data: out,
            },
            op,
            rg,
        ))
    }

    /// Adds `bias[c]` to every element of channel `c`, where channels are axis 1.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (sx, sb) = (self.shape(x), self.shape(bias));
        if sx.len() < 2 || sb.len() != 1 || sx[1] != sb[0] {
            return Err(Error::Dimension {
                op: "add_bias",
                lhs: sx.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let (channels, inner) = (sx[1], sx[2..].iter().product::<usize>());
        let b = self.value(bias).data();
        let mut data = self.value(x).data().to_vec();
        for (i, chunk) in data.chunks_mut(inner).enumerate() {
            let bc = b[i % channels];
            chunk.iter_mut().for_each(|v| *v += bc);
        }
        let shape = sx.to_vec();
        let rg = self.any_grad(&[x, bias]);
        Ok(self.push(Tensor { shape, data }, Op::AddBias { x, bias }, rg))
    }

    /// Non-overlapping `k×k` average pooling of `[N, C, H, W]`.
    pub fn avg_pool(&mut self, x: Var, k: usize) -> Result<Var> {
        let s = self.shape(x);
        if s.len() != 4 || k == 0 || s[2] < k || s[3] < k {
            return Err(Error::config(format!("avg_pool window {k} does not fit input {s:?}")));
        }
        let (shape, data) = avg_pool_forward(s, self.value(x).data(), k);
        let rg = self.any_grad(&[x]);
        Ok(self.push(Tensor { shape, data }, Op::AvgPool { x, k }, rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape)?;
        let rg = self.any_grad(&[x]);
        Ok(self.push(value, Op::Reshape(x), rg))
    }

    /// Scalar view of element `index` of a flat parameter vector.
    pub fn select(&mut self, x: Var, index: usize) -> Result<Var> {
        let t = self.value(x);
        let v = *t.data().get(index).ok_or(Error::Index {
            index,
            len: t.numel(),
        })?;
        let rg = self.any_grad(&[x]);
        Ok(self.push(Tensor::scalar(v), Op::Select { x, index }, rg))
    }

    /// Sub-tensor at `index` along the leading axis.
    pub fn index_first(&mut self, x: Var, index: usize) -> Result<Var> {
        let value = self.value(x).index_first(index)?;
        let rg = self.any_grad(&[x]);
        Ok(self.push(value, Op::IndexFirst { x, index }, rg))
    }

    /// Stacks equally shaped values along a new leading axis.
    pub fn stack(&mut self, parts: &[Var]) -> Result<Var> {
        let tensors: Vec<Tensor> = parts.iter().map(|&p| self.value(p).clone()).collect();
        let value = Tensor::stack(&tensors)?;
        let rg = self.any_grad(parts);
        Ok(self.push(value, Op::Stack(parts.to_vec()), rg))
    }

    /// Concatenates along the existing leading axis.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::Contract("concat of zero tensors".into()))?;
        let tail = self.shape(first)[1..].to_vec();
        let mut lead = 0;
        let mut data = Vec::new();
        for &p in parts {
            let s = self.shape(p);
            if s.is_empty() || s[1..] != tail[..] {
                return Err(Error::Dimension {
                    op: "concat",
                    lhs: self.shape(first).to_vec(),
                    rhs: s.to_vec(),
                });
            }
            lead += s[0];
            data.extend_from_slice(self.value(p).data());
        }
        let mut shape = vec![lead];
        shape.extend(tail);
        let rg = self.any_grad(parts);
        Ok(self.push(Tensor { shape, data }, Op::Concat(parts.to_vec()), rg))
    }

    /// Tiles `x` `times` times along its leading axis: `[N, ...] -> [times·N, ...]`.
    pub fn repeat(&mut self, x: Var, times: usize) -> Result<Var> {
        let t = self.value(x);
        if t.shape().is_empty() || times == 0 {
            return Err(Error::config("repeat needs a leading axis and times >= 1"));
        }
        let mut shape = t.shape().to_vec();
        shape[0] *= times;
        let mut data = Vec::with_capacity(t.numel() * times);
        for _ in 0..times {
            data.extend_from_slice(t.data());
        }
        let rg = self.any_grad(&[x]);
        Ok(self.push(Tensor { shape, data }, Op::Repeat { x, times }, rg))
    }

    /// Spike nonlinearity `S = θ(h − threshold)` with `θ(0) = 1`.
    pub fn spike(&mut self, h: Var, threshold: f64, alpha: f64, surrogate: Surrogate) -> Var {
        let t = self.value(h);
        let data = t.data().iter().map(|&v| spike_value(v, threshold, alpha, surrogate)).collect();
        let shape = t.shape().to_vec();
        let rg = self.any_grad(&[h]);
        self.push(
            Tensor { shape, data },
            Op::Spike {
                h,
                threshold,
                alpha,
            },
            rg,
        )
    }

    /// `scale · Σ_t w_t · O[t]` over the leading axis of `outputs`; `w_t = 1` when
    /// `weights` is `None`.
    pub fn time_weighted_sum(&mut self, outputs: Var, weights: Option<Var>, scale: f64) -> Result<Var> {
        let o = self.value(outputs);
        let steps = *o
            .shape()
            .first()
            .ok_or_else(|| Error::Contract("time_weighted_sum needs a time axis".into()))?;
        if steps == 0 {
            return Err(Error::config("time_weighted_sum over zero steps"));
        }
        if let Some(w) = weights {
            if self.value(w).numel() != steps {
                return Err(Error::config(format!(
                    "temporal weights have length {}, outputs have {steps} steps",
                    self.value(w).numel()
                )));
            }
        }
        let inner = o.numel() / steps;
        let mut acc = vec![0.0; inner];
        for t in 0..steps {
            let slice = &o.data()[t * inner..(t + 1) * inner];
            match weights {
                Some(w) => {
                    let wt = self.value(w).data()[t];
                    acc.iter_mut().zip(slice).for_each(|(a, &x)| *a += wt * x);
                }
                None => acc.iter_mut().zip(slice).for_each(|(a, &x)| *a += x),
            }
        }
        acc.iter_mut().for_each(|a| *a *= scale);
        let shape = o.shape()[1..].to_vec();
        let mut inputs = vec![outputs];
        inputs.extend(weights);
        let rg = self.any_grad(&inputs);
        Ok(self.push(
            Tensor { shape, data: acc },
            Op::TimeWeightedSum {
                outputs,
                weights,
                scale,
            },
            rg,
        ))
    }

    /// Mean over the batch of `−log softmax(logits)[label]`, stabilised by max subtraction.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let t = self.value(logits);
        let s = t.shape();
        if s.len() != 2 || s[0] != labels.len() {
            return Err(Error::Dimension {
                op: "cross_entropy",
                lhs: s.to_vec(),
                rhs: vec![labels.len()],
            });
        }
        let (batch, classes) = (s[0], s[1]);
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::data(format!("label {bad} out of range for {classes} classes")));
        }
        let mut probs = vec![0.0; batch * classes];
        let mut total = 0.0;
        for b in 0..batch {
            let row = &t.data()[b * classes..(b + 1) * classes];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let p = &mut probs[b * classes..(b + 1) * classes];
            let mut denom = 0.0;
            for (pi, &x) in p.iter_mut().zip(row) {
                *pi = (x - max).exp();
                denom += *pi;
            }
            p.iter_mut().for_each(|v| *v /= denom);
            total += max + denom.ln() - row[labels[b]];
        }
        let loss = total / batch as f64;
        let rg = self.any_grad(&[logits]);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            rg,
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let v = self.value(x).sum();
        let rg = self.any_grad(&[x]);
        self.push(Tensor::scalar(v), Op::Sum(x), rg)
    }

    /// Back-propagates from a one-element `loss`. Can run once per tape.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.consumed {
            return Err(Error::Contract(
                "backward already ran on this tape; record a new forward pass".into(),
            ));
        }
        if self.records.is_empty() {
            return Err(Error::Contract("backward on an empty tape".into()));
        }
        let lv = self.value(loss);
        if lv.numel() != 1 {
            return Err(Error::Contract(format!(
                "loss must be a scalar, got shape {:?}",
                lv.shape()
            )));
        }
        self.consumed = true;

        let mut grads: Vec<Option<Vec<f64>>> = (0..self.records.len()).map(|_| None).collect();
        if self.records[loss.0].requires_grad {
            grads[loss.0] = Some(vec![1.0]);
        }
        for id in (0..=loss.0).rev() {
            let rec = &self.records[id];
            if !rec.requires_grad || matches!(rec.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            self.backprop(rec, &g, &mut grads);
        }

        let out = self
            .records
            .iter()
            .enumerate()
            .map(|(id, rec)| {
                (matches!(rec.op, Op::Leaf) && rec.requires_grad).then(|| {
                    let data = grads[id].take().unwrap_or_else(|| vec![0.0; rec.value.numel()]);
                    Tensor {
                        shape: rec.value.shape().to_vec(),
                        data,
                    }
                })
            })
            .collect();
        Ok(Gradients { grads: out })
    }

    fn wants(&self, v: Var) -> bool {
        self.records[v.0].requires_grad
    }

    fn backprop(&self, rec: &Record, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let mut acc = |v: Var, contrib: Vec<f64>| accumulate(grads, v, contrib);
        match &rec.op {
            Op::Leaf => {}
            Op::Add(a, b, mode) | Op::Sub(a, b, mode) => {
                let sign = if matches!(rec.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                if self.wants(*a) {
                    let ga = match mode {
                        Broadcast::LeftScalar => vec![g.iter().sum()],
                        _ => g.to_vec(),
                    };
                    acc(*a, ga);
                }
                if self.wants(*b) {
                    let gb = match mode {
                        Broadcast::RightScalar => vec![sign * g.iter().sum::<f64>()],
                        _ => g.iter().map(|&x| sign * x).collect(),
                    };
                    acc(*b, gb);
                }
            }
            Op::Mul(a, b, mode) => {
                let (da, db) = (self.value(*a).data(), self.value(*b).data());
                if self.wants(*a) {
                    let ga = match mode {
                        Broadcast::Same => g.iter().zip(db).map(|(&x, &y)| x * y).collect(),
                        Broadcast::LeftScalar => vec![g.iter().zip(db).map(|(&x, &y)| x * y).sum()],
                        Broadcast::RightScalar => g.iter().map(|&x| x * db[0]).collect(),
                    };
                    acc(*a, ga);
                }
                if self.wants(*b) {
                    let gb = match mode {
                        Broadcast::Same => g.iter().zip(da).map(|(&x, &y)| x * y).collect(),
                        Broadcast::RightScalar => vec![g.iter().zip(da).map(|(&x, &y)| x * y).sum()],
                        Broadcast::LeftScalar => g.iter().map(|&x| x * da[0]).collect(),
                    };
                    acc(*b, gb);
                }
            }
            Op::Scale(x, c) => acc(*x, g.iter().map(|&v| c * v).collect()),
            Op::AddScalar(x) | Op::Reshape(x) => acc(*x, g.to_vec()),
            Op::Sigmoid(x) => {
                let y = rec.value.data();
                acc(*x, g.iter().zip(y).map(|(&gv, &yv)| gv * yv * (1.0 - yv)).collect());
            }
            Op::MatMul(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                if self.wants(*a) {
                    let mut ga = vec![0.0; m * k];
                    gemm_strided(m, n, k, g, (n, 1), self.value(*b).data(), (1, n), &mut ga, 0.0);
                    acc(*a, ga);
                }
                if self.wants(*b) {
                    let mut gb = vec![0.0; k * n];
                    gemm_strided(k, m, n, self.value(*a).data(), (1, k), g, (n, 1), &mut gb, 0.0);
                    acc(*b, gb);
                }
            }
            Op::Conv2d {
                input,
                kernel,
                geom,
                cols,
            } => {
                let (o, pl, np) = (geom.out_channels, geom.patch_len(), geom.positions());
                if self.wants(*kernel) {
                    let cols = cols.as_ref().expect("conv2d columns saved for kernel gradient");
                    let mut gk = vec![0.0; o * pl];
                    for n in 0..geom.batch {
                        gemm_strided(
                            o,
                            np,
                            pl,
                            &g[n * o * np..(n + 1) * o * np],
                            (np, 1),
                            &cols[n * pl * np..(n + 1) * pl * np],
                            (1, np),
                            &mut gk,
                            1.0,
                        );
                    }
                    acc(*kernel, gk);
                }
                if self.wants(*input) {
                    let k = self.value(*kernel).data();
                    let plane = geom.in_channels * geom.height * geom.width;
                    let mut gi = vec![0.0; geom.batch * plane];
                    let mut dcols = vec![0.0; pl * np];
                    for n in 0..geom.batch {
                        gemm_strided(pl, o, np, k, (1, pl), &g[n * o * np..(n + 1) * o * np], (np, 1), &mut dcols, 0.0);
                        geom.col2im_sample(&dcols, &mut gi[n * plane..(n + 1) * plane]);
                    }
                    acc(*input, gi);
                }
            }
            Op::AddBias { x, bias } => {
                if self.wants(*x) {
                    acc(*x, g.to_vec());
                }
                if self.wants(*bias) {
                    let s = self.shape(*x);
                    let (channels, inner) = (s[1], s[2..].iter().product::<usize>());
                    let mut gb = vec![0.0; channels];
                    for (i, chunk) in g.chunks(inner).enumerate() {
                        gb[i % channels] += chunk.iter().sum::<f64>();
                    }
                    acc(*bias, gb);
                }
            }
            Op::AvgPool { x, k } => acc(*x, avg_pool_backward(self.shape(*x), g, *k)),
            Op::Select { x, index } => {
                let mut gx = vec![0.0; self.value(*x).numel()];
                gx[*index] = g[0];
                acc(*x, gx);
            }
            Op::IndexFirst { x, index } => {
                let mut gx = vec![0.0; self.value(*x).numel()];
                let inner = g.len();
                gx[index * inner..(index + 1) * inner].copy_from_slice(g);
                acc(*x, gx);
            }
            Op::Stack(parts) | Op::Concat(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).numel();
                    if self.wants(p) {
                        acc(p, g[offset..offset + len].to_vec());
                    }
                    offset += len;
                }
            }
            Op::Repeat { x, times } => {
                let len = self.value(*x).numel();
                let mut gx = g[..len].to_vec();
                for r in 1..*times {
                    gx.iter_mut().zip(&g[r * len..(r + 1) * len]).for_each(|(a, &b)| *a += b);
                }
                acc(*x, gx);
            }
            Op::Spike { h, threshold, alpha } => {
                let hv = self.value(*h).data();
                let gh = g
                    .iter()
                    .zip(hv)
                    .map(|(&gv, &x)| gv * surrogate_grad(x - threshold, *alpha))
                    .collect();
                acc(*h, gh);
            }
            Op::TimeWeightedSum {
                outputs,
                weights,
                scale,
            } => {
                let o = self.value(*outputs);
                let inner = g.len();
                let steps = o.numel() / inner;
                let wv = weights.map(|w| self.value(w).data());
                if self.wants(*outputs) {
                    let mut go = Vec::with_capacity(o.numel());
                    for t in 0..steps {
                        let f = match wv {
                            Some(w) => scale * w[t],
                            None => *scale,
                        };
                        go.extend(g.iter().map(|&x| f * x));
                    }
                    acc(*outputs, go);
                }
                if let Some(w) = weights.filter(|w| self.wants(*w)) {
                    let gw = (0..steps)
                        .map(|t| {
                            let slice = &o.data()[t * inner..(t + 1) * inner];
                            scale * g.iter().zip(slice).map(|(&a, &b)| a * b).sum::<f64>()
                        })
                        .collect();
                    acc(w, gw);
                }
            }
            Op::CrossEntropy { logits, labels, probs } => {
                let batch = labels.len();
                let classes = probs.len() / batch.max(1);
                let f = g[0] / batch as f64;
                let mut gl: Vec<f64> = probs.iter().map(|&p| f * p).collect();
                for (b, &l) in labels.iter().enumerate() {
                    gl[b * classes + l] -= f;
                }
                acc(*logits, gl);
            }
            Op::Sum(x) => acc(*x, vec![g[0]; self.value(*x).numel()]),
        }
    }
}

/// Forward value of the spike nonlinearity for one potential.
pub fn spike_value(h: f64, threshold: f64, alpha: f64, surrogate: Surrogate) -> f64 {
    match surrogate {
        Surrogate::Heaviside => {
            if h >= threshold {
                1.0
            } else {
                0.0
            }
        }
        Surrogate::Smooth => 0.5 + (PI * alpha * (h - threshold) / 2.0).atan() / PI,
    }
}

/// Arctangent surrogate derivative `α / (2(1 + (π·α·u/2)²))` at `u = h − threshold`.
pub fn surrogate_grad(u: f64, alpha: f64) -> f64 {
    let z = PI * alpha * u / 2.0;
    alpha / (2.0 * (1.0 + z * z))
}

fn accumulate(grads: &mut [Option<Vec<f64>>], v: Var, contrib: Vec<f64>) {
    match &mut grads[v.0] {
        Some(existing) => existing.iter_mut().zip(&contrib).for_each(|(a, &b)| *a += b),
        slot @ None => *slot = Some(contrib),
    }
}
