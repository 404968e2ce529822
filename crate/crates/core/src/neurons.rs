//! Spiking neuron state machines: IF, LIF, PLIF and ULIF.
//!
//! Each step charges the membrane (`H[t]` from `V[t-1]` and the input `X[t]`),
//! fires where `H[t]` reaches the threshold, then resets:
//!
//! | kind | charge |
//! |------|--------|
//! | IF   | `H = V + X` |
//! | LIF  | `H = V + (X − V − V_reset)/τ` |
//! | PLIF | `H = V + sigmoid(a)·(X − (V − V_reset))` |
//! | ULIF | `H = lᵗ·V + iᵗ·X` |
//!
//! Hard reset sets `V = H(1 − S) + V_reset·S`; soft reset subtracts the
//! threshold, `V = H − V_th·S`. With `time_wise` the learnable scalars become
//! per-step vectors of length `T`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Surrogate, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NeuronKind {
    If,
    Lif,
    Plif,
    Ulif,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResetMode {
    Hard,
    Soft,
}

impl std::str::FromStr for NeuronKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "if" => Ok(Self::If),
            "lif" => Ok(Self::Lif),
            "plif" => Ok(Self::Plif),
            "ulif" => Ok(Self::Ulif),
            other => Err(Error::config(format!("unknown neuron model '{other}'"))),
        }
    }
}

impl std::str::FromStr for ResetMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hard" => Ok(Self::Hard),
            "soft" => Ok(Self::Soft),
            other => Err(Error::config(format!("unknown reset mode '{other}'"))),
        }
    }
}

fn default_threshold() -> f64 {
    1.0
}
fn default_tau() -> f64 {
    2.0
}
fn default_alpha() -> f64 {
    2.0
}
fn default_leak() -> f64 {
    0.9
}
fn default_gain() -> f64 {
    1.0
}

/// Static description of a neuron population. Learnable values live in
/// [`NeuronParams`] or, inside a network, in its parameter table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeuronConfig {
    pub kind: NeuronKind,
    #[serde(default = "default_threshold")]
    pub v_threshold: f64,
    #[serde(default)]
    pub v_reset: f64,
    pub reset: ResetMode,
    /// Membrane time constant, LIF only.
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default)]
    pub time_wise: bool,
    #[serde(default = "default_alpha")]
    pub surrogate_alpha: f64,
    #[serde(default = "default_leak")]
    pub init_leak: f64,
    #[serde(default = "default_gain")]
    pub init_gain: f64,
    /// Initial pre-sigmoid PLIF decay; 0 gives sigmoid(a) = 0.5.
    #[serde(default)]
    pub init_decay: f64,
    #[serde(skip)]
    pub surrogate: Surrogate,
}

impl NeuronConfig {
    pub fn new(kind: NeuronKind, reset: ResetMode) -> Self {
        Self {
            kind,
            v_threshold: default_threshold(),
            v_reset: 0.0,
            reset,
            tau: default_tau(),
            time_wise: false,
            surrogate_alpha: default_alpha(),
            init_leak: default_leak(),
            init_gain: default_gain(),
            init_decay: 0.0,
            surrogate: Surrogate::Heaviside,
        }
    }

    pub fn time_wise(mut self, on: bool) -> Self {
        self.time_wise = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == NeuronKind::Lif && !(self.tau > 1.0) {
            return Err(Error::config(format!("LIF needs tau > 1, got {}", self.tau)));
        }
        if self.reset == ResetMode::Hard && !(self.v_threshold > self.v_reset) {
            return Err(Error::config(format!(
                "hard reset needs v_threshold > v_reset ({} <= {})",
                self.v_threshold, self.v_reset
            )));
        }
        if !(self.surrogate_alpha > 0.0) {
            return Err(Error::config("surrogate_alpha must be positive"));
        }
        Ok(())
    }

    /// Length of each learnable vector for a run of `steps` steps.
    pub fn param_len(&self, steps: usize) -> usize {
        if self.time_wise {
            steps
        } else {
            1
        }
    }

    /// Names and initial values of the learnable vectors this kind carries.
    pub fn initial_params(&self, steps: usize) -> Vec<(&'static str, Vec<f64>)> {
        let n = self.param_len(steps);
        match self.kind {
            NeuronKind::If | NeuronKind::Lif => Vec::new(),
            NeuronKind::Plif => vec![("decay", vec![self.init_decay; n])],
            NeuronKind::Ulif => vec![("leak", vec![self.init_leak; n]), ("gain", vec![self.init_gain; n])],
        }
    }
}

/// A neuron configuration together with concrete learnable values.
#[derive(Clone, Debug, PartialEq)]
pub struct NeuronParams {
    pub config: NeuronConfig,
    /// ULIF leak `l` (one value, or one per step when time-wise).
    pub leak: Vec<f64>,
    /// ULIF input gain `i`.
    pub gain: Vec<f64>,
    /// PLIF pre-sigmoid decay `a`.
    pub decay: Vec<f64>,
}

impl NeuronParams {
    /// Default-initialised parameters for a run of `steps` steps.
    pub fn new(config: NeuronConfig, steps: usize) -> Self {
        let n = config.param_len(steps);
        Self {
            leak: vec![config.init_leak; n],
            gain: vec![config.init_gain; n],
            decay: vec![config.init_decay; n],
            config,
        }
    }

    pub fn integrate_and_fire(reset: ResetMode) -> Self {
        Self::new(NeuronConfig::new(NeuronKind::If, reset), 1)
    }

    pub fn lif(tau: f64, reset: ResetMode) -> Self {
        let mut config = NeuronConfig::new(NeuronKind::Lif, reset);
        config.tau = tau;
        Self::new(config, 1)
    }

    pub fn plif(decay: Vec<f64>, reset: ResetMode) -> Self {
        let mut config = NeuronConfig::new(NeuronKind::Plif, reset);
        config.time_wise = decay.len() > 1;
        Self {
            leak: vec![config.init_leak],
            gain: vec![config.init_gain],
            decay,
            config,
        }
    }

    /// ULIF with the given leak and gain; vectors longer than one enable time-wise mode.
    pub fn ulif(leak: Vec<f64>, gain: Vec<f64>, reset: ResetMode) -> Self {
        let mut config = NeuronConfig::new(NeuronKind::Ulif, reset);
        config.time_wise = leak.len() > 1 || gain.len() > 1;
        Self {
            leak,
            gain,
            decay: vec![config.init_decay],
            config,
        }
    }

    pub fn with_threshold(mut self, v_threshold: f64) -> Self {
        self.config.v_threshold = v_threshold;
        self
    }

    pub fn with_reset_potential(mut self, v_reset: f64) -> Self {
        self.config.v_reset = v_reset;
        self
    }

    /// Checks the learnable vectors against a run of `steps` steps.
    pub fn validate(&self, steps: usize) -> Result<()> {
        self.config.validate()?;
        let expected = self.config.param_len(steps);
        let check = |name: &str, v: &[f64]| {
            if v.len() != expected {
                Err(Error::config(format!(
                    "{name} has length {}, expected {expected} for {steps} steps",
                    v.len()
                )))
            } else {
                Ok(())
            }
        };
        match self.config.kind {
            NeuronKind::Ulif => {
                check("leak", &self.leak)?;
                check("gain", &self.gain)
            }
            NeuronKind::Plif => check("decay", &self.decay),
            NeuronKind::If | NeuronKind::Lif => Ok(()),
        }
    }

    /// Registers the learnable vectors on `tape` as gradient-tracked leaves.
    pub fn bind<'a>(&'a self, tape: &mut Tape) -> BoundNeuron<'a> {
        let mut leaf = |v: &[f64]| Some(tape.param(Tensor::from_vec(v.to_vec())));
        let (leak, gain, decay) = match self.config.kind {
            NeuronKind::Ulif => (leaf(&self.leak), leaf(&self.gain), None),
            NeuronKind::Plif => (None, None, leaf(&self.decay)),
            NeuronKind::If | NeuronKind::Lif => (None, None, None),
        };
        BoundNeuron {
            config: &self.config,
            leak,
            gain,
            decay,
        }
    }
}

/// A neuron configuration whose learnable vectors are variables on a tape.
#[derive(Clone, Copy, Debug)]
pub struct BoundNeuron<'a> {
    pub config: &'a NeuronConfig,
    pub leak: Option<Var>,
    pub gain: Option<Var>,
    pub decay: Option<Var>,
}

impl<'a> BoundNeuron<'a> {
    pub fn new(config: &'a NeuronConfig, leak: Option<Var>, gain: Option<Var>, decay: Option<Var>) -> Self {
        Self {
            config,
            leak,
            gain,
            decay,
        }
    }

    fn required(&self, v: Option<Var>, name: &str) -> Result<Var> {
        v.ok_or_else(|| Error::config(format!("{:?} neuron is missing its {name} parameter", self.config.kind)))
    }

    /// Scalar coefficient for step `t`: the shared value, or element `t` when time-wise.
    fn at_step(&self, tape: &mut Tape, v: Var, t: usize) -> Result<Var> {
        if self.config.time_wise {
            tape.select(v, t)
        } else {
            Ok(v)
        }
    }

    fn check_lengths(&self, tape: &Tape, steps: usize) -> Result<()> {
        let expected = self.config.param_len(steps);
        for (name, v) in [("leak", self.leak), ("gain", self.gain), ("decay", self.decay)] {
            if let Some(v) = v {
                let len = tape.value(v).numel();
                if len != expected {
                    return Err(Error::config(format!(
                        "{name} has length {len}, expected {expected} for {steps} steps"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Membrane potential `V[t]` after step `t` (index of the next step to run).
#[derive(Clone, Copy, Debug)]
pub struct MembraneState {
    pub v: Var,
    pub t: usize,
}

impl MembraneState {
    /// `V[0] = V_reset` for every neuron of the given shape.
    pub fn initial(tape: &mut Tape, config: &NeuronConfig, shape: &[usize]) -> Self {
        Self {
            v: tape.constant(Tensor::full(shape, config.v_reset)),
            t: 0,
        }
    }
}

/// Pre-spike potential `H[t]`.
pub fn charge(tape: &mut Tape, neuron: &BoundNeuron, state: &MembraneState, x: Var) -> Result<Var> {
    if tape.shape(x) != tape.shape(state.v) {
        return Err(Error::Dimension {
            op: "charge",
            lhs: tape.shape(state.v).to_vec(),
            rhs: tape.shape(x).to_vec(),
        });
    }
    let cfg = neuron.config;
    let v = state.v;
    match cfg.kind {
        NeuronKind::If => tape.add(v, x),
        NeuronKind::Lif => {
            let d = tape.sub(x, v)?;
            let d = tape.add_scalar(d, -cfg.v_reset);
            let m = tape.scale(d, 1.0 / cfg.tau);
            tape.add(v, m)
        }
        NeuronKind::Plif => {
            let a = neuron.required(neuron.decay, "decay")?;
            let a = neuron.at_step(tape, a, state.t)?;
            let k = tape.sigmoid(a);
            let shifted = tape.add_scalar(v, -cfg.v_reset);
            let d = tape.sub(x, shifted)?;
            let m = tape.mul(k, d)?;
            tape.add(v, m)
        }
        NeuronKind::Ulif => {
            let l = neuron.required(neuron.leak, "leak")?;
            let i = neuron.required(neuron.gain, "gain")?;
            let l = neuron.at_step(tape, l, state.t)?;
            let i = neuron.at_step(tape, i, state.t)?;
            let lv = tape.mul(l, v)?;
            let ix = tape.mul(i, x)?;
            tape.add(lv, ix)
        }
    }
}

/// `S[t] = θ(H[t] − V_th)`, differentiated through the arctangent surrogate.
pub fn fire(tape: &mut Tape, h: Var, v_threshold: f64, surrogate_alpha: f64, surrogate: Surrogate) -> Var {
    tape.spike(h, v_threshold, surrogate_alpha, surrogate)
}

/// Post-spike potential `V[t]`; the returned state is ready for step `t + 1`.
pub fn reset(tape: &mut Tape, h: Var, s: Var, config: &NeuronConfig, t: usize) -> Result<MembraneState> {
    let v = match config.reset {
        ResetMode::Hard => {
            let keep = tape.scale(s, -1.0);
            let keep = tape.add_scalar(keep, 1.0);
            let a = tape.mul(h, keep)?;
            let b = tape.scale(s, config.v_reset);
            tape.add(a, b)?
        }
        ResetMode::Soft => {
            let drop = tape.scale(s, config.v_threshold);
            tape.sub(h, drop)?
        }
    };
    Ok(MembraneState { v, t: t + 1 })
}

/// Spikes and membrane traces of one sequence.
#[derive(Clone, Debug)]
pub struct SequenceOutput {
    /// `[T, ...]` spike train.
    pub spikes: Var,
    pub h: Vec<Var>,
    pub v: Vec<Var>,
}

/// Runs charge → fire → reset for every step of `x_seq` (`[T, ...]`) from `V[0] = V_reset`.
pub fn run_sequence(tape: &mut Tape, neuron: &BoundNeuron, x_seq: Var) -> Result<SequenceOutput> {
    let shape = tape.shape(x_seq).to_vec();
    let steps = *shape
        .first()
        .ok_or_else(|| Error::config("input sequence needs a time axis"))?;
    neuron.config.validate()?;
    neuron.check_lengths(tape, steps)?;
    let mut state = MembraneState::initial(tape, neuron.config, &shape[1..]);
    let mut spikes = Vec::with_capacity(steps);
    let (mut hs, mut vs) = (Vec::with_capacity(steps), Vec::with_capacity(steps));
    for t in 0..steps {
        let x = tape.index_first(x_seq, t)?;
        let h = charge(tape, neuron, &state, x)?;
        let s = fire(
            tape,
            h,
            neuron.config.v_threshold,
            neuron.config.surrogate_alpha,
            neuron.config.surrogate,
        );
        state = reset(tape, h, s, neuron.config, t)?;
        spikes.push(s);
        hs.push(h);
        vs.push(state.v);
    }
    let spikes = tape.stack(&spikes)?;
    Ok(SequenceOutput { spikes, h: hs, v: vs })
}

/// Value-only evaluation of a sequence: `(spikes, h, v)`, each `[T, ...]`.
pub fn evaluate_sequence(params: &NeuronParams, x_seq: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
    let steps = x_seq.shape().first().copied().unwrap_or(0);
    params.validate(steps)?;
    let mut tape = Tape::inference();
    let bound = params.bind(&mut tape);
    let x = tape.constant(x_seq.clone());
    let out = run_sequence(&mut tape, &bound, x)?;
    let collect = |tape: &Tape, vars: &[Var]| {
        let parts: Vec<Tensor> = vars.iter().map(|&v| tape.value(v).clone()).collect();
        Tensor::stack(&parts)
    };
    Ok((tape.value(out.spikes).clone(), collect(&tape, &out.h)?, collect(&tape, &out.v)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_input(value: f64, steps: usize) -> Tensor {
        Tensor::new(vec![steps, 1], vec![value; steps]).unwrap()
    }

    fn one_step(params: &NeuronParams, v: f64, x: f64) -> f64 {
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let state = MembraneState {
            v: tape.constant(Tensor::scalar(v)),
            t: 0,
        };
        let x = tape.constant(Tensor::scalar(x));
        let h = charge(&mut tape, &bound, &state, x).unwrap();
        tape.value(h).item()
    }

    #[test]
    fn ulif_hand_evaluation() {
        let p = NeuronParams::ulif(vec![-3.0], vec![2.0], ResetMode::Soft);
        assert_eq!(one_step(&p, 0.5, 0.75), 0.0);
    }

    #[test]
    fn if_soft_reset_sequence() {
        let p = NeuronParams::integrate_and_fire(ResetMode::Soft);
        let (s, h, _) = evaluate_sequence(&p, &constant_input(0.75, 4)).unwrap();
        assert_eq!(s.data(), &[0.0, 1.0, 1.0, 1.0]);
        assert_eq!(h.data(), &[0.75, 1.5, 1.25, 1.0]);
    }

    #[test]
    fn ulif_time_wise_sequence() {
        let p = NeuronParams::ulif(vec![1.0, 1.0, -3.0, 2.0], vec![2.0; 4], ResetMode::Soft);
        let (s, h, _) = evaluate_sequence(&p, &constant_input(0.75, 4)).unwrap();
        assert_eq!(s.data(), &[1.0, 1.0, 0.0, 0.0]);
        assert_eq!(h.data(), &[1.5, 2.0, -1.5, -1.5]);
    }

    #[test]
    fn zero_input_never_spikes() {
        let x = constant_input(0.0, 6);
        for p in [
            NeuronParams::integrate_and_fire(ResetMode::Hard),
            NeuronParams::lif(2.0, ResetMode::Hard),
            NeuronParams::plif(vec![0.0], ResetMode::Soft),
            NeuronParams::ulif(vec![0.9], vec![1.0], ResetMode::Soft),
        ] {
            let (s, _, v) = evaluate_sequence(&p, &x).unwrap();
            assert_eq!(s.sum(), 0.0);
            assert!(v.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn resets() {
        let mut tape = Tape::new();
        let h = tape.constant(Tensor::from_vec(vec![1.5, 2.0, 0.3]));
        let s = tape.constant(Tensor::from_vec(vec![1.0, 1.0, 0.0]));
        let hard = NeuronConfig::new(NeuronKind::If, ResetMode::Hard);
        let soft = NeuronConfig::new(NeuronKind::If, ResetMode::Soft);
        let vh = reset(&mut tape, h, s, &hard, 0).unwrap();
        let vs = reset(&mut tape, h, s, &soft, 0).unwrap();
        assert_eq!(tape.value(vh.v).data(), &[0.0, 0.0, 0.3]);
        assert_eq!(tape.value(vs.v).data(), &[0.5, 1.0, 0.3]);
        assert_eq!(vh.t, 1);
    }

    #[test]
    fn time_wise_index_past_end_is_index_error() {
        let p = NeuronParams::ulif(vec![1.0, 1.0], vec![1.0, 1.0], ResetMode::Soft);
        let mut tape = Tape::new();
        let bound = p.bind(&mut tape);
        let state = MembraneState {
            v: tape.constant(Tensor::scalar(0.0)),
            t: 2,
        };
        let x = tape.constant(Tensor::scalar(1.0));
        assert!(matches!(charge(&mut tape, &bound, &state, x), Err(Error::Index { .. })));
    }

    #[test]
    fn length_mismatch_is_config_error() {
        let p = NeuronParams::ulif(vec![1.0; 3], vec![1.0; 3], ResetMode::Soft);
        let err = evaluate_sequence(&p, &constant_input(0.5, 4)).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn invalid_configs() {
        assert!(NeuronParams::lif(1.0, ResetMode::Hard).validate(1).is_err());
        let p = NeuronParams::integrate_and_fire(ResetMode::Hard).with_reset_potential(1.0);
        assert!(p.validate(1).is_err());
    }
}
