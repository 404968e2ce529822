//! Single-neuron lab: scalar simulation, stimulus profiles, behavioural scenarios
//! and trace export.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neurons::{NeuronKind, NeuronParams, ResetMode};
use crate::plot::{extent, Frame, Svg, PALETTE};
use crate::tensor::{sigmoid, spike_value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    /// `amplitude` at every step.
    Constant,
    /// `amplitude` on `[onset, offset)`, zero elsewhere.
    Step,
    /// `min(amplitude, slope·(t − onset + 1))` on `[onset, offset)`, zero elsewhere.
    Ramp,
    /// Same shape as `Step`, intended for short windows.
    Pulse,
    /// `−|amplitude|` on `[onset, offset)`, zero elsewhere.
    InhibitoryRelease,
}

/// Input current over time. Step indices are zero-based.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurrentProfile {
    pub kind: ProfileKind,
    pub amplitude: f64,
    #[serde(default)]
    pub onset: usize,
    #[serde(default)]
    pub offset: usize,
    #[serde(default)]
    pub slope: f64,
}

impl CurrentProfile {
    pub fn constant(amplitude: f64) -> Self {
        Self {
            kind: ProfileKind::Constant,
            amplitude,
            onset: 0,
            offset: 0,
            slope: 0.0,
        }
    }

    fn windowed(kind: ProfileKind, amplitude: f64, onset: usize, offset: usize) -> Self {
        Self {
            kind,
            amplitude,
            onset,
            offset,
            slope: 0.0,
        }
    }

    pub fn step(amplitude: f64, onset: usize, offset: usize) -> Self {
        Self::windowed(ProfileKind::Step, amplitude, onset, offset)
    }

    pub fn pulse(amplitude: f64, onset: usize, offset: usize) -> Self {
        Self::windowed(ProfileKind::Pulse, amplitude, onset, offset)
    }

    pub fn ramp(amplitude: f64, slope: f64, onset: usize, offset: usize) -> Self {
        Self {
            slope,
            ..Self::windowed(ProfileKind::Ramp, amplitude, onset, offset)
        }
    }

    pub fn inhibitory_release(amplitude: f64, onset: usize, offset: usize) -> Self {
        Self::windowed(ProfileKind::InhibitoryRelease, amplitude, onset, offset)
    }

    pub fn validate(&self, steps: usize) -> Result<()> {
        if !self.amplitude.is_finite() || !self.slope.is_finite() {
            return Err(Error::config("current amplitude and slope must be finite"));
        }
        if self.kind != ProfileKind::Constant && !(self.onset < self.offset && self.offset <= steps) {
            return Err(Error::config(format!(
                "window [{}, {}) must satisfy onset < offset <= {steps}",
                self.onset, self.offset
            )));
        }
        Ok(())
    }

    /// Current at each of `steps` steps.
    pub fn samples(&self, steps: usize) -> Result<Vec<f64>> {
        self.validate(steps)?;
        Ok((0..steps)
            .map(|t| {
                let inside = self.onset <= t && t < self.offset;
                match self.kind {
                    ProfileKind::Constant => self.amplitude,
                    _ if !inside => 0.0,
                    ProfileKind::Step | ProfileKind::Pulse => self.amplitude,
                    ProfileKind::Ramp => {
                        let r = self.slope * (t - self.onset + 1) as f64;
                        if self.amplitude >= 0.0 {
                            r.min(self.amplitude)
                        } else {
                            r.max(self.amplitude)
                        }
                    }
                    ProfileKind::InhibitoryRelease => -self.amplitude.abs(),
                }
            })
            .collect())
    }
}

/// Per-step record of one neuron: input, pre-spike and post-reset potential, spikes.
#[derive(Clone, Debug, PartialEq)]
pub struct SimTrace {
    pub x: Vec<f64>,
    pub h: Vec<f64>,
    pub v: Vec<f64>,
    pub s: Vec<f64>,
}

impl SimTrace {
    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn spike_count(&self) -> usize {
        self.s.iter().filter(|&&s| s > 0.0).count()
    }

    /// Zero-based steps at which the neuron fired.
    pub fn spike_steps(&self) -> Vec<usize> {
        (0..self.len()).filter(|&t| self.s[t] > 0.0).collect()
    }
}

fn coefficient(values: &[f64], time_wise: bool, t: usize) -> f64 {
    if time_wise {
        values[t]
    } else {
        values[0]
    }
}

/// Runs the neuron state machine over an explicit input sequence.
///
/// Arithmetic follows the tape implementation operation by operation, so results
/// agree bitwise with [`crate::neurons::run_sequence`].
pub fn simulate_inputs(params: &NeuronParams, inputs: &[f64]) -> Result<SimTrace> {
    let steps = inputs.len();
    params.validate(steps)?;
    let c = &params.config;
    let tw = c.time_wise;
    let mut v = c.v_reset;
    let mut trace = SimTrace {
        x: inputs.to_vec(),
        h: Vec::with_capacity(steps),
        v: Vec::with_capacity(steps),
        s: Vec::with_capacity(steps),
    };
    for (t, &x) in inputs.iter().enumerate() {
        let h = match c.kind {
            NeuronKind::If => v + x,
            NeuronKind::Lif => v + (1.0 / c.tau) * ((x - v) + -c.v_reset),
            NeuronKind::Plif => {
                let k = sigmoid(coefficient(&params.decay, tw, t));
                v + k * (x - (v + -c.v_reset))
            }
            NeuronKind::Ulif => coefficient(&params.leak, tw, t) * v + coefficient(&params.gain, tw, t) * x,
        };
        let s = spike_value(h, c.v_threshold, c.surrogate_alpha, c.surrogate);
        v = match c.reset {
            ResetMode::Hard => h * (-s + 1.0) + c.v_reset * s,
            ResetMode::Soft => h - c.v_threshold * s,
        };
        trace.h.push(h);
        trace.v.push(v);
        trace.s.push(s);
    }
    Ok(trace)
}

pub fn simulate(params: &NeuronParams, profile: &CurrentProfile, steps: usize) -> Result<SimTrace> {
    simulate_inputs(params, &profile.samples(steps)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioName {
    Tonic,
    Phasic,
    Accommodation,
    Rebound,
}

impl ScenarioName {
    pub const ALL: [ScenarioName; 4] = [Self::Tonic, Self::Phasic, Self::Accommodation, Self::Rebound];

    pub fn name(self) -> &'static str {
        match self {
            Self::Tonic => "tonic",
            Self::Phasic => "phasic",
            Self::Accommodation => "accommodation",
            Self::Rebound => "rebound",
        }
    }
}

impl FromStr for ScenarioName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|n| n.name() == s)
            .ok_or_else(|| Error::config(format!("unknown scenario {s:?}; expected tonic, phasic, accommodation or rebound")))
    }
}

/// A parameter set with one or more stimuli and a behavioural check.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub name: ScenarioName,
    pub params: NeuronParams,
    pub steps: usize,
    /// Labelled stimuli; accommodation uses two (slow ramp, fast step).
    pub stimuli: Vec<(&'static str, CurrentProfile)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioOutcome {
    pub passed: bool,
    pub detail: String,
    pub traces: Vec<(&'static str, SimTrace)>,
}

/// Shipped fixture for each behaviour.
pub fn scenario(name: ScenarioName) -> Scenario {
    match name {
        ScenarioName::Tonic => Scenario {
            name,
            params: NeuronParams::integrate_and_fire(ResetMode::Soft),
            steps: 10,
            stimuli: vec![("sustained", CurrentProfile::constant(1.5))],
        },
        ScenarioName::Phasic => {
            let mut gain = vec![0.1; 10];
            gain[0] = 2.0;
            Scenario {
                name,
                params: NeuronParams::ulif(vec![0.5; 10], gain, ResetMode::Hard),
                steps: 10,
                stimuli: vec![("sustained", CurrentProfile::step(0.75, 0, 10))],
            }
        }
        ScenarioName::Accommodation => Scenario {
            name,
            params: NeuronParams::ulif(vec![-0.5], vec![1.0], ResetMode::Soft),
            steps: 24,
            stimuli: vec![
                ("slow ramp", CurrentProfile::ramp(1.2, 0.1, 0, 24)),
                ("fast step", CurrentProfile::step(1.2, 0, 24)),
            ],
        },
        ScenarioName::Rebound => Scenario {
            name,
            params: NeuronParams::ulif(vec![-0.5], vec![2.0], ResetMode::Soft),
            steps: 16,
            stimuli: vec![("inhibition", CurrentProfile::inhibitory_release(2.0, 2, 10))],
        },
    }
}

impl Scenario {
    pub fn run(&self) -> Result<ScenarioOutcome> {
        let traces = self
            .stimuli
            .iter()
            .map(|(label, p)| Ok((*label, simulate(&self.params, p, self.steps)?)))
            .collect::<Result<Vec<_>>>()?;
        let (passed, detail) = check(self.name, &self.stimuli, &traces);
        Ok(ScenarioOutcome { passed, detail, traces })
    }
}

/// Applies the behavioural assertion for `name` to traces produced from `stimuli`.
pub fn check(
    name: ScenarioName,
    stimuli: &[(&'static str, CurrentProfile)],
    traces: &[(&'static str, SimTrace)],
) -> (bool, String) {
    let first = &traces[0].1;
    match name {
        ScenarioName::Tonic => {
            let n = first.spike_count();
            (n >= 3, format!("{n} spikes under sustained current (need >= 3)"))
        }
        ScenarioName::Phasic => {
            let steps = first.spike_steps();
            let onset = stimuli[0].1.onset;
            (steps == [onset], format!("spikes at {steps:?}, expected exactly [{onset}]"))
        }
        ScenarioName::Accommodation => {
            let slow = first.spike_count();
            let fast = traces.get(1).map_or(0, |t| t.1.spike_count());
            (
                slow == 0 && fast >= 1,
                format!("slow ramp {slow} spikes (need 0), fast step {fast} spikes (need >= 1)"),
            )
        }
        ScenarioName::Rebound => {
            let release = stimuli[0].1.offset;
            let steps = first.spike_steps();
            let early = steps.iter().filter(|&&t| t < release).count();
            let after = steps.len() - early;
            (
                early == 0 && after >= 1,
                format!("{early} spikes before release at step {release} (need 0), {after} after (need >= 1)"),
            )
        }
    }
}

/// Writes `<path>.csv` (columns `t,x,h,v,s`, `t` one-based) and `<path>.svg`.
pub fn export_trace(trace: &SimTrace, path: &Path) -> Result<(PathBuf, PathBuf)> {
    let csv_path = path.with_extension("csv");
    let svg_path = path.with_extension("svg");
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(&csv_path, trace_csv(trace)?).map_err(|e| Error::io(&csv_path, e))?;
    fs::write(&svg_path, trace_svg(trace)).map_err(|e| Error::io(&svg_path, e))?;
    Ok((csv_path, svg_path))
}

pub fn trace_csv(trace: &SimTrace) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::data(format!("csv: {e}"));
    w.write_record(["t", "x", "h", "v", "s"]).map_err(csv_err)?;
    for t in 0..trace.len() {
        w.write_record([
            (t + 1).to_string(),
            trace.x[t].to_string(),
            trace.h[t].to_string(),
            trace.v[t].to_string(),
            trace.s[t].to_string(),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::data(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn parse_trace_csv(text: &str) -> Result<SimTrace> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let mut trace = SimTrace {
        x: Vec::new(),
        h: Vec::new(),
        v: Vec::new(),
        s: Vec::new(),
    };
    for row in r.records() {
        let row = row.map_err(|e| Error::data(format!("csv: {e}")))?;
        let field = |i: usize| -> Result<f64> {
            row.get(i)
                .and_then(|f| f.parse().ok())
                .ok_or_else(|| Error::data(format!("bad trace row {row:?}")))
        };
        trace.x.push(field(1)?);
        trace.h.push(field(2)?);
        trace.v.push(field(3)?);
        trace.s.push(field(4)?);
    }
    Ok(trace)
}

/// Three stacked panels: input current, membrane potentials, spike raster.
pub fn trace_svg(trace: &SimTrace) -> String {
    let n = trace.len();
    let mut svg = Svg::new(640.0, 560.0);
    let xr = (1.0, n.max(1) as f64);
    let points = |vals: &[f64], f: &Frame| -> Vec<(f64, f64)> {
        vals.iter().enumerate().map(|(t, &y)| f.map((t + 1) as f64, y)).collect()
    };

    let current = Frame::new(70.0, 40.0, 540.0, 120.0, xr, extent(trace.x.iter().copied().chain([0.0])));
    current.axes(&mut svg, "input current", "", "x");
    svg.polyline(&points(&trace.x, &current), PALETTE[0]);

    let membrane = Frame::new(
        70.0,
        220.0,
        540.0,
        160.0,
        xr,
        extent(trace.h.iter().chain(&trace.v).copied().chain([0.0, 1.0])),
    );
    membrane.axes(&mut svg, "membrane potential (h solid, v dashed marks)", "", "potential");
    svg.polyline(&points(&trace.h, &membrane), PALETTE[1]);
    for p in points(&trace.v, &membrane) {
        svg.circle(p, 2.5, PALETTE[2]);
    }

    let raster = Frame::new(70.0, 440.0, 540.0, 60.0, xr, (0.0, 1.0));
    raster.axes(&mut svg, "spikes", "time step", "");
    for t in trace.spike_steps() {
        svg.line(raster.map((t + 1) as f64, 0.1), raster.map((t + 1) as f64, 0.9), "black", 2.0);
    }
    svg.finish()
}
